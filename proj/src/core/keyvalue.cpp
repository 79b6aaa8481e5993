#include "illusion/keyvalue.hpp"

#include "illusion/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace illusion {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

KeyValueDoc KeyValueDoc::parse(const std::string& text) {
    KeyValueDoc doc;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (doc.has(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        doc.entries_.emplace_back(key, trim(t.substr(eq + 1)));
    }
    return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KeyValueDoc::to_string() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
}

void KeyValueDoc::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_string();
}

void KeyValueDoc::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

void KeyValueDoc::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValueDoc::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool KeyValueDoc::has(const std::string& key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueDoc::find(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    return std::nullopt;
}

std::string KeyValueDoc::get_string(const std::string& key) const {
    auto v = find(key);
    if (!v) throw ConfigError("missing key '" + key + "'");
    return *v;
}

std::string KeyValueDoc::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

namespace {

double parse_double(const std::string& key, const std::string& text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("key '" + key + "': '" + text + "' is not a number");
    return value;
}

long long parse_int(const std::string& key, const std::string& text) {
    long long value = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw ConfigError("key '" + key + "': '" + text + "' is not an integer");
    return value;
}

}  // namespace

double KeyValueDoc::get_double(const std::string& key) const { return parse_double(key, get_string(key)); }

double KeyValueDoc::get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? parse_double(key, *v) : fallback;
}

long long KeyValueDoc::get_int(const std::string& key) const { return parse_int(key, get_string(key)); }

long long KeyValueDoc::get_int(const std::string& key, long long fallback) const {
    auto v = find(key);
    return v ? parse_int(key, *v) : fallback;
}

bool KeyValueDoc::get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("key '" + key + "': '" + *v + "' is not a boolean");
}

std::vector<std::string> KeyValueDoc::get_list(const std::string& key) const { return split_list(get_string(key)); }

std::vector<std::string> KeyValueDoc::get_list(const std::string& key, std::vector<std::string> fallback) const {
    auto v = find(key);
    return v ? split_list(*v) : fallback;
}

std::vector<double> KeyValueDoc::get_double_list(const std::string& key, std::vector<double> fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_double(key, item));
    return out;
}

std::vector<long long> KeyValueDoc::get_int_list(const std::string& key, std::vector<long long> fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    std::vector<long long> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_int(key, item));
    return out;
}

std::vector<std::string> KeyValueDoc::keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
        if (k.rfind(prefix, 0) == 0) out.push_back(k);
    return out;
}

}  // namespace illusion
