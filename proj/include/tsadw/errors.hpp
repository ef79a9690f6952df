#pragma once

#include <stdexcept>
#include <string>

namespace tsadw {

/// Dimension or layout disagreement between two objects that must match.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed on-disk artifact. Carries the line (text formats) or byte
/// offset (binary formats) where parsing stopped; -1 when not applicable.
struct ParseError : std::runtime_error {
    long long position = -1;
    ParseError(const std::string& what, long long pos = -1)
        : std::runtime_error(what), position(pos) {}
};

/// File carries a format version this build does not understand.
struct VersionError : std::runtime_error {
    explicit VersionError(const std::string& what) : std::runtime_error(what) {}
};

/// A matrix block that must be factorized turned out singular.
struct SingularMatrixError : std::runtime_error {
    int pivot = -1;  // index of the offending pivot within the eliminated block
    SingularMatrixError(const std::string& what, int pivot_index)
        : std::runtime_error(what), pivot(pivot_index) {}
};

/// Configuration value out of range or inconsistent.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Training diverged or produced a non-finite objective.
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsadw
