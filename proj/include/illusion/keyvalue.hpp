/**
 * @file keyvalue.hpp
 * @brief Line-oriented `key = value` text documents.
 *
 * Used for stimulus sidecar manifests, sequence manifests and suite configs.
 * Blank lines and lines starting with `#` are ignored. Keys keep insertion
 * order so written documents are byte-stable. Lists are comma separated.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace illusion {

class KeyValueDoc {
public:
    static KeyValueDoc parse(const std::string& text);
    static KeyValueDoc load(const std::filesystem::path& path);

    std::string to_string() const;
    void save(const std::filesystem::path& path) const;

    /// Replaces an existing key in place or appends a new one.
    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);
    void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }

    bool has(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) const;
    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;
    std::vector<long long> get_int_list(const std::string& key, std::vector<long long> fallback) const;

    /// Keys sharing `prefix`, in document order.
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest round-tripping decimal form of a double.
std::string format_double(double value);

std::vector<std::string> split_list(const std::string& text, char sep = ',');
std::string trim(const std::string& text);

}  // namespace illusion
