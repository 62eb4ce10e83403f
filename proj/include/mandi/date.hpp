#pragma once

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

#include "mandi/error.hpp"

namespace mandi {

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    require(ymd.ok(), "invalid calendar date");
    return Date{ymd};
}

namespace detail {

inline bool parse_uint(std::string_view s, int& out) {
    if (s.empty() || s.size() > 4) return false;
    int v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

}  // namespace detail

/// Accepts `YYYY-MM-DD` and `DD/MM/YYYY`. Returns nullopt on anything else,
/// including impossible dates such as 2015-02-29.
inline std::optional<Date> parse_date(std::string_view s) {
    int y = 0, m = 0, d = 0;
    if (s.size() == 10 && s[4] == '-' && s[7] == '-') {
        if (!detail::parse_uint(s.substr(0, 4), y) || !detail::parse_uint(s.substr(5, 2), m) ||
            !detail::parse_uint(s.substr(8, 2), d))
            return std::nullopt;
    } else if (s.size() == 10 && s[2] == '/' && s[5] == '/') {
        if (!detail::parse_uint(s.substr(0, 2), d) || !detail::parse_uint(s.substr(3, 2), m) ||
            !detail::parse_uint(s.substr(6, 4), y))
            return std::nullopt;
    } else {
        return std::nullopt;
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y},
                                          std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) return std::nullopt;
    return Date{ymd};
}

inline Date parse_date_or_throw(std::string_view s, ErrorKind kind = ErrorKind::InvalidArgument) {
    auto d = parse_date(s);
    if (!d) fail(kind, "invalid date '" + std::string(s) + "'");
    return *d;
}

inline std::string format_date(Date date) {
    const std::chrono::year_month_day ymd{date};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Ordinal day within the date's own year: Jan 1 is 1, Dec 31 is 365 or 366.
inline int day_of_year(Date date) {
    const std::chrono::year_month_day ymd{date};
    const Date jan1{ymd.year() / std::chrono::January / 1};
    return static_cast<int>((date - jan1).count()) + 1;
}

/// Inclusive calendar range.
struct DateRange {
    Date first;
    Date last;

    bool empty() const { return last < first; }
    std::size_t days() const {
        return empty() ? 0 : static_cast<std::size_t>((last - first).count()) + 1;
    }
    bool contains(Date d) const { return first <= d && d <= last; }

    friend bool operator==(const DateRange&, const DateRange&) = default;
};

}  // namespace mandi
