#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <tuple>

#include "moodveil/common.hpp"

namespace moodveil {

// Proleptic Gregorian calendar date. Conversions use the days_from_civil
// algorithm (Howard Hinnant's chrono arithmetic), valid far beyond any
// timestamp this toolkit sees.
struct CivilDate {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    friend bool operator==(const CivilDate&, const CivilDate&) = default;
    friend auto operator<=>(const CivilDate& a, const CivilDate& b) {
        return std::tie(a.year, a.month, a.day) <=> std::tie(b.year, b.month, b.day);
    }
};

// days since 1970-01-01
inline int64_t days_from_civil(const CivilDate& d) {
    int y = d.year - (d.month <= 2);
    int64_t era = (y >= 0 ? y : y - 399) / 400;
    unsigned yoe = static_cast<unsigned>(y - era * 400);
    unsigned doy = (153u * (d.month + (d.month > 2 ? -3 : 9)) + 2) / 5 + d.day - 1;
    unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(int64_t z) {
    z += 719468;
    int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    unsigned doe = static_cast<unsigned>(z - era * 146097);
    unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    int y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    unsigned mp = (5 * doy + 2) / 153;
    unsigned d = doy - (153 * mp + 2) / 5 + 1;
    unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDate{y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
}

inline CivilDate add_days(const CivilDate& d, int64_t n) { return civil_from_days(days_from_civil(d) + n); }

inline bool valid_date(const CivilDate& d) {
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) return false;
    return civil_from_days(days_from_civil(d)) == d;
}

inline std::string to_iso(const CivilDate& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

// Strict ISO-8601 YYYY-MM-DD.
inline CivilDate parse_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') fail("bad date '" + s + "': expected YYYY-MM-DD");
    for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) fail("bad date '" + s + "': expected YYYY-MM-DD");
    CivilDate d{std::stoi(s.substr(0, 4)), std::stoi(s.substr(5, 2)), std::stoi(s.substr(8, 2))};
    if (!valid_date(d)) fail("bad date '" + s + "': no such calendar day");
    return d;
}

}  // namespace moodveil
