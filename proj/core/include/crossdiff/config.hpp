#pragma once

#include "crossdiff/common.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace crossdiff {

// Flat key=value experiment configuration. Lines starting with '#' are
// comments; CLI overrides replace file values and must reference keys the
// consumer declares.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::filesystem::path& path);
    void apply_override(const std::string& assignment);  // "key=value"

    bool has(const std::string& key) const;
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Every key must be consumed through one of the getters above; unknown
    // leftovers indicate a typo and raise ConfigError.
    void check_consumed() const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

private:
    std::map<std::string, std::string> entries_;
    mutable std::map<std::string, bool> touched_;
};

}  // namespace crossdiff
