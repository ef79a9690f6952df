#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsadw/errors.hpp"

namespace tsadw {

/// Wraps an angle into [-pi, pi).
double wrap_angle(double radians);

/// One voltage-phasor entry: bus `bus_id` at post-clearance cycle `cycle`
/// (cycles count from 1 at the configured frame rate).
struct PhasorSample {
    int bus_id = 0;
    int cycle = 1;
    double magnitude = 0.0;  // per-unit, >= 0
    double angle = 0.0;      // radians in [-pi, pi)
};

/// B x T record of voltage phasors with a per-entry known mask.
///
/// Unknown entries hold 0.0 in both channels. That sentinel is what the
/// networks see when a column is zero-padded, but no internal logic ever
/// inspects the value itself: the mask is authoritative.
class MeasurementMatrix {
public:
    MeasurementMatrix() = default;
    MeasurementMatrix(int bus_count, int cycle_count);

    /// Builds a fully-known matrix from dense channel data.
    static MeasurementMatrix full(const Eigen::MatrixXd& mag, const Eigen::MatrixXd& ang);

    int bus_count() const { return static_cast<int>(mag_.rows()); }
    int cycle_count() const { return static_cast<int>(mag_.cols()); }

    /// Writes one sample and marks it known. Returns false (and leaves the
    /// matrix untouched) when the entry was already known: first write wins.
    bool set(int bus, int cycle, double magnitude, double angle);

    bool known(int bus, int cycle) const { return known_(bus, cycle - 1) != 0; }
    double magnitude(int bus, int cycle) const { return mag_(bus, cycle - 1); }
    double angle(int bus, int cycle) const { return ang_(bus, cycle - 1); }

    /// Fraction of known entries in column `cycle` (mag and ang arrive
    /// together, so the fraction over 2B values equals the one over B).
    double known_fraction(int cycle) const;

    /// True when every bus in `buses` is known at `cycle`.
    bool subset_known(const std::vector<int>& buses, int cycle) const;

    bool fully_known() const;

    const Eigen::MatrixXd& mag() const { return mag_; }
    const Eigen::MatrixXd& ang() const { return ang_; }
    const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask() const { return known_; }

    bool operator==(const MeasurementMatrix& other) const;

private:
    Eigen::MatrixXd mag_;  // B x T
    Eigen::MatrixXd ang_;  // B x T
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> known_;
};

struct CaseMeta {
    double load_pct = 100.0;           // operating load level in percent
    int fault_bus = -1;                // faulted terminal bus
    std::vector<std::string> removed;  // component ids of the outage pair
};

/// One labeled training/testing pair. Label 1 = stable, 0 = unstable.
struct ContingencyCase {
    std::string id;
    MeasurementMatrix matrix;
    int label = 1;
    CaseMeta meta;
};

/// Per-bus z-score statistics for both channels, computed on a training
/// split only. Std entries below 1e-9 are replaced by 1 so constant
/// channels normalize to zero instead of dividing by zero.
struct NormalizationStats {
    Eigen::VectorXd mag_mean, mag_std, ang_mean, ang_std;

    int bus_count() const { return static_cast<int>(mag_mean.size()); }
    bool valid() const;
};

struct Dataset {
    std::vector<ContingencyCase> cases;
    std::optional<NormalizationStats> stats;
    double frame_hz = 60.0;

    double cycle_ms() const { return 1000.0 / frame_hz; }
};

/// Network input built from a (possibly partial) measurement matrix.
/// `data` is D x T' with D = 2 * |buses used|; row layout is
/// [mag(b0), ang(b0), mag(b1), ang(b1), ...] with buses ascending.
/// T' = 0 is valid and means "no inference possible yet".
struct InputWindow {
    Eigen::MatrixXd data;
    std::vector<int> buses;

    int cycles() const { return static_cast<int>(data.cols()); }
    bool empty() const { return data.cols() == 0; }
};

NormalizationStats compute_stats(const std::vector<ContingencyCase>& training_cases);

/// Replaces every known channel value by (value - mean) / std for its bus.
/// Mask and label are unchanged. Throws ShapeError on dimension mismatch.
ContingencyCase normalize_case(const ContingencyCase& c, const NormalizationStats& stats);

/// Exact inverse of normalize_case given the same stats.
ContingencyCase denormalize_case(const ContingencyCase& c, const NormalizationStats& stats);

/// Builds the network input window.
///
/// Main-block mode (no subset): column t is included iff its known fraction
/// exceeds phi (a complete column always qualifies, which is what makes
/// phi = 1.0 meaningful under the strict inequality) and column t-1 is
/// included (t = 1 exempt). Unknown entries are emitted as 0.0.
///
/// Ensemble mode (subset given): column t is included iff every subset bus
/// is known at t and column t-1 is included. No padding ever occurs.
InputWindow build_input_window(const MeasurementMatrix& m, double phi,
                               const std::optional<std::vector<int>>& bus_subset = std::nullopt);

/// Deterministic shuffle-then-cut split. ceil(ratio * n) cases go to train.
/// Normalization stats are recomputed on the train side only.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double ratio, std::uint64_t seed);

}  // namespace tsadw
