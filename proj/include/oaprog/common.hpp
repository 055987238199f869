#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace oaprog {

/// Raised for malformed run configurations (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for bad input data or broken pipeline contracts (CLI exit code 1).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A single table cell: missing, numeric, or text.
/// Missingness is a first-class state, never a sentinel number.
using Value = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Value& v) {
    return std::holds_alternative<std::monostate>(v);
}

inline bool is_number(const Value& v) {
    return std::holds_alternative<double>(v);
}

inline bool is_text(const Value& v) {
    return std::holds_alternative<std::string>(v);
}

inline double as_number(const Value& v) {
    return std::get<double>(v);
}

inline const std::string& as_text(const Value& v) {
    return std::get<std::string>(v);
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double out = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return out;
}

inline std::optional<bool> parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    return std::nullopt;
}

/// Shortest decimal form that round-trips back to the same double.
inline std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

/// Cell rendering used by the CSV writer; missing becomes the empty string.
inline std::string value_to_string(const Value& v) {
    if (is_missing(v)) return "";
    if (is_number(v)) return format_double(as_number(v));
    return as_text(v);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    size_t start = 0;
    while (true) {
        size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

}  // namespace oaprog
