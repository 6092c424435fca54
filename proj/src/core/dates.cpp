#include "imargin/dates.hpp"

#include <charconv>
#include <cstdio>

#include "imargin/errors.hpp"

namespace imargin {

namespace {

int parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return -1;
    return v;
}

bool weekday(Date d) {
    const auto wd = std::chrono::weekday(d).c_encoding();  // 0 = Sunday
    return wd != 0 && wd != 6;
}

}  // namespace

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw ConfigError("bad date '" + std::string(text) + "', expected YYYY-MM-DD");
    const int y = parse_int(text.substr(0, 4));
    const int m = parse_int(text.substr(5, 2));
    const int d = parse_int(text.substr(8, 2));
    const std::chrono::year_month_day ymd{std::chrono::year(y),
                                          std::chrono::month(static_cast<unsigned>(m)),
                                          std::chrono::day(static_cast<unsigned>(d))};
    if (y < 0 || m < 0 || d < 0 || !ymd.ok())
        throw ConfigError("bad date '" + std::string(text) + "'");
    return Date(ymd);
}

std::string format_date(Date d) {
    const std::chrono::year_month_day ymd(d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

long business_days(Date from, Date to) {
    if (to < from) return -business_days(to, from);
    const long total = (to - from).count();
    const long weeks = total / 7;
    long count = weeks * 5;
    for (Date d = from + std::chrono::days(weeks * 7 + 1); d <= to; d += std::chrono::days(1))
        if (weekday(d)) ++count;
    return count;
}

double year_fraction_252(Date from, Date to) {
    return static_cast<double>(business_days(from, to)) / 252.0;
}

}  // namespace imargin
