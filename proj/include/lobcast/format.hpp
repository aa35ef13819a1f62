#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace lobcast::fmt {

/// Shortest decimal representation that round-trips to the same double.
[[nodiscard]] inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    (void)ec;
    return std::string(buf.data(), ptr);
}

[[nodiscard]] inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

namespace detail {

inline std::optional<long long> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// "hh:mm:ss", "hh:mm:ss.fffffff" or "hh:mm:ss:fffffff"
inline std::optional<double> parse_time_of_day(std::string_view s) {
    if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() < 8 || s[2] != ':' || s[5] != ':') return std::nullopt;
    const auto h = parse_int(s.substr(0, 2));
    const auto m = parse_int(s.substr(3, 2));
    const auto sec = parse_int(s.substr(6, 2));
    if (!h || !m || !sec || *h > 23 || *m > 59 || *sec > 60) return std::nullopt;
    double frac = 0.0;
    if (s.size() > 8) {
        if (s[8] != '.' && s[8] != ':') return std::nullopt;
        const std::string_view digits = s.substr(9);
        if (digits.empty() || !parse_int(digits)) return std::nullopt;
        double scale = 0.1;
        for (char c : digits) {
            frac += (c - '0') * scale;
            scale *= 0.1;
        }
    }
    return static_cast<double>(*h * 3600 + *m * 60 + *sec) + frac;
}

}  // namespace detail

/// Parses epoch seconds ("1556864000.25") or ISO-8601 with fractional seconds
/// ("2019-05-03T06:52:00.1234567", optional 'Z', ' ' accepted for 'T').
/// A bare time of day ("06:52:00:1234567") yields seconds since midnight.
[[nodiscard]] inline std::optional<double> parse_timestamp(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (s.size() >= 10 && s[4] == '-' && s[7] == '-') {
        const auto y = detail::parse_int(s.substr(0, 4));
        const auto mo = detail::parse_int(s.substr(5, 2));
        const auto d = detail::parse_int(s.substr(8, 2));
        if (!y || !mo || !d) return std::nullopt;
        const std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(*y)},
                                              std::chrono::month{static_cast<unsigned>(*mo)},
                                              std::chrono::day{static_cast<unsigned>(*d)}};
        if (!ymd.ok()) return std::nullopt;
        const double day_seconds =
            static_cast<double>(std::chrono::sys_days{ymd}.time_since_epoch().count()) * 86400.0;
        if (s.size() == 10) return day_seconds;
        if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
        const auto tod = detail::parse_time_of_day(s.substr(11));
        if (!tod) return std::nullopt;
        return day_seconds + *tod;
    }
    if (s.size() >= 8 && s[2] == ':') return detail::parse_time_of_day(s);
    return parse_double(s);
}

/// "YYYY-MM-DD" of the UTC day containing epoch second `t`.
[[nodiscard]] inline std::string utc_date(double t) {
    const auto days = static_cast<long long>(std::floor(t / 86400.0));
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days}}};
    std::array<char, 16> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf.data();
}

/// Writes `content` to `path` through a temporary sibling and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace lobcast::fmt
