#include "crossdiff/config.hpp"

#include <fstream>
#include <sstream>

namespace crossdiff {

namespace {

std::string strip(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path.string() + "'");
    KeyValueConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
        config.entries_[strip(s.substr(0, eq))] = strip(s.substr(eq + 1));
    }
    return config;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ArgumentError("override '" + assignment + "' must be key=value");
    entries_[strip(assignment.substr(0, eq))] = strip(assignment.substr(eq + 1));
}

bool KeyValueConfig::has(const std::string& key) const {
    return entries_.count(key) != 0;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
    touched_[key] = true;
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    touched_[key] = true;
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        size_t used = 0;
        const double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
    }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
    const double v = get_double(key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw ConfigError("config key '" + key + "': expected an integer");
    return i;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    touched_[key] = true;
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return std::stoull(it->second);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    touched_[key] = true;
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

void KeyValueConfig::check_consumed() const {
    for (const auto& [key, value] : entries_)
        if (!touched_.count(key)) throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace crossdiff
