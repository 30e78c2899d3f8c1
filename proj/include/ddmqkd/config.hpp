#pragma once

// Key-value run configuration.
//
//     # comment
//     protocol = COW
//     detector.dead_time = 20e-6
//     mu_sweep.mu_list = 1, 0.1, 0.01
//
// Keys are bound to typed fields through a Binder that records the effective
// value of every field, defaults included. The configuration hash is taken
// over that effective set so two files that differ only in comments, order or
// spelled-out defaults hash equally.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ddmqkd/error.hpp"

namespace ddmqkd {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class KeyValues {
public:
    static KeyValues parse(std::istream& is)
    {
        KeyValues kv;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos)
                line.erase(hash);
            line = trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": empty key");
            if (!kv.values_.emplace(key, value).second)
                fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        return kv;
    }

    static KeyValues parse_string(const std::string& text)
    {
        std::istringstream is(text);
        return parse(is);
    }

    static KeyValues load(const std::string& path)
    {
        std::ifstream is(path);
        if (!is)
            fail(ErrorKind::Config, "cannot open config file '" + path + "'");
        return parse(is);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string* find(const std::string& key) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? nullptr : &it->second;
    }
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& key, const std::string& s)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (trim(s.substr(pos)).empty())
            return v;
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Config, "key '" + key + "': '" + s + "' is not a number");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s)
{
    try {
        std::size_t pos = 0;
        if (!s.empty() && s[0] != '-') {
            const auto v = std::stoull(s, &pos, 0);
            if (trim(s.substr(pos)).empty())
                return v;
        }
    } catch (const std::exception&) {
    }
    fail(ErrorKind::Config, "key '" + key + "': '" + s + "' is not a non-negative integer");
}

inline bool parse_bool(const std::string& key, const std::string& s)
{
    if (s == "true" || s == "on" || s == "yes" || s == "1")
        return true;
    if (s == "false" || s == "off" || s == "no" || s == "0")
        return false;
    fail(ErrorKind::Config, "key '" + key + "': '" + s + "' is not a boolean");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s)
{
    std::vector<double> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ','))
        out.push_back(parse_double(key, trim(item)));
    if (out.empty())
        fail(ErrorKind::Config, "key '" + key + "': empty list");
    return out;
}

inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Binder {
public:
    explicit Binder(const KeyValues& kv) : kv_(kv) {}

    void bind(const std::string& key, double& v)
    {
        if (const auto* s = take(key))
            v = parse_double(key, *s);
        record(key, format_double(v));
    }

    void bind(const std::string& key, std::uint64_t& v)
    {
        if (const auto* s = take(key))
            v = parse_u64(key, *s);
        record(key, std::to_string(v));
    }

    void bind(const std::string& key, bool& v)
    {
        if (const auto* s = take(key))
            v = parse_bool(key, *s);
        record(key, v ? "true" : "false");
    }

    void bind(const std::string& key, std::string& v)
    {
        if (const auto* s = take(key))
            v = *s;
        record(key, v);
    }

    void bind(const std::string& key, std::vector<double>& v)
    {
        if (const auto* s = take(key))
            v = parse_list(key, *s);
        std::string joined;
        for (std::size_t i = 0; i < v.size(); ++i)
            joined += (i ? "," : "") + format_double(v[i]);
        record(key, joined);
    }

    // Any key in the file that no field claimed is a typo or a stale option.
    void reject_unknown() const
    {
        for (const auto& [key, value] : kv_.values())
            if (!used_.count(key))
                fail(ErrorKind::Config, "unknown key '" + key + "'");
    }

    const std::vector<std::pair<std::string, std::string>>& effective() const { return effective_; }

    std::string canonical() const
    {
        auto sorted = effective_;
        std::sort(sorted.begin(), sorted.end());
        std::string out;
        for (const auto& [k, v] : sorted)
            out += k + "=" + v + "\n";
        return out;
    }

    std::string hash() const
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
        return buf;
    }

private:
    const std::string* take(const std::string& key)
    {
        used_.insert(key);
        return kv_.find(key);
    }

    void record(const std::string& key, std::string value) { effective_.emplace_back(key, std::move(value)); }

    const KeyValues& kv_;
    std::set<std::string> used_;
    std::vector<std::pair<std::string, std::string>> effective_;
};

} // namespace ddmqkd
