#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sag {

// Configuration / usage problems; the CLI maps these to exit code 1.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Flat key-value configuration with [section] headers and '#' comments.
class Config {
public:
    bool has(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    std::string require_str(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;

    // Throws config_error if the section holds a key outside `allowed`.
    void check_keys(const std::string& section, const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

    // Canonical text form (sorted sections/keys); embedded into output files.
    std::string serialize() const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

Config parse_config_text(const std::string& text);
Config parse_config_file(const std::string& path);

}  // namespace sag
