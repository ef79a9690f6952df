#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsadw/errors.hpp"

namespace tsadw {

/// Minimal structured-text reader: `[section]` headers, `key = value`
/// entries, `#` comments. Repeated keys inside a section are preserved in
/// order, which is how list-like data (machines, lines, loads) is written.
/// Values are kept as raw strings; typed accessors parse on demand.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& name = "<string>");

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;

    /// All values recorded for section/key, in file order.
    std::vector<std::string> all(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    /// Comma-separated list of numbers, e.g. `levels = 80, 90, 100, 110`.
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<int> get_ints(const std::string& section, const std::string& key) const;

    std::vector<std::string> sections() const;

    /// Splits one raw value on commas and trims whitespace.
    static std::vector<std::string> split_list(const std::string& value);

private:
    std::string name_;
    // section -> ordered (key, value) pairs
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> data_;
    std::vector<std::string> section_order_;

    const std::string* find_one(const std::string& section, const std::string& key) const;
};

}  // namespace tsadw
