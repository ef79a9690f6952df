#include "tsadw/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace tsadw {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& name) {
    ConfigFile cf;
    cf.name_ = name;

    std::istringstream in(text);
    std::string line;
    std::string section;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(name + ":" + std::to_string(line_no) + ": unterminated section header",
                                 line_no);
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ParseError(name + ":" + std::to_string(line_no) + ": empty section name", line_no);
            if (!cf.data_.count(section)) cf.section_order_.push_back(section);
            cf.data_[section];  // ensure the section exists even if empty
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(name + ":" + std::to_string(line_no) + ": expected `key = value`", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = strip_quotes(trim(line.substr(eq + 1)));
        if (key.empty())
            throw ParseError(name + ":" + std::to_string(line_no) + ": empty key", line_no);
        if (section.empty())
            throw ParseError(name + ":" + std::to_string(line_no) + ": entry before any [section]",
                             line_no);
        cf.data_[section].emplace_back(key, value);
    }
    return cf;
}

bool ConfigFile::has_section(const std::string& section) const { return data_.count(section) > 0; }

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find_one(section, key) != nullptr;
}

const std::string* ConfigFile::find_one(const std::string& section, const std::string& key) const {
    auto it = data_.find(section);
    if (it == data_.end()) return nullptr;
    const std::string* found = nullptr;
    for (const auto& [k, v] : it->second)
        if (k == key) found = &v;  // last occurrence wins for scalar lookups
    return found;
}

std::vector<std::string> ConfigFile::all(const std::string& section, const std::string& key) const {
    std::vector<std::string> out;
    auto it = data_.find(section);
    if (it == data_.end()) return out;
    for (const auto& [k, v] : it->second)
        if (k == key) out.push_back(v);
    return out;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
    const auto* v = find_one(section, key);
    if (!v) throw ConfigError(name_ + ": missing [" + section + "] " + key);
    return *v;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    const auto* v = find_one(section, key);
    return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(name_ + ": [" + section + "] " + key + " = `" + v + "` is not a number");
    }
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(name_ + ": [" + section + "] " + key + " = `" + v + "` is not an integer");
    }
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    try {
        std::size_t pos = 0;
        const std::uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError(name_ + ": [" + section + "] " + key + " = `" + v + "` is not an unsigned integer");
    }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    std::string v = get_string(section, key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(name_ + ": [" + section + "] " + key + " = `" + v + "` is not a boolean");
}

std::vector<std::string> ConfigFile::split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : value) {
        if (c == ',') {
            parts.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
    while (!parts.empty() && parts.back().empty()) parts.pop_back();
    return parts;
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : split_list(get_string(section, key))) {
        try {
            out.push_back(std::stod(p));
        } catch (const std::exception&) {
            throw ConfigError(name_ + ": [" + section + "] " + key + ": `" + p + "` is not a number");
        }
    }
    return out;
}

std::vector<int> ConfigFile::get_ints(const std::string& section, const std::string& key) const {
    std::vector<int> out;
    for (const auto& p : split_list(get_string(section, key))) {
        try {
            out.push_back(std::stoi(p));
        } catch (const std::exception&) {
            throw ConfigError(name_ + ": [" + section + "] " + key + ": `" + p + "` is not an integer");
        }
    }
    return out;
}

std::vector<std::string> ConfigFile::sections() const { return section_order_; }

}  // namespace tsadw
