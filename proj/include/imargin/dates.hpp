#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace imargin {

using Date = std::chrono::sys_days;

// ISO 8601 calendar date (YYYY-MM-DD).
Date parse_date(std::string_view text);
std::string format_date(Date d);

// Monday-to-Friday days in (from, to]; negative when to < from.
long business_days(Date from, Date to);

// Year fraction under ACT/252 with weekday counting.
double year_fraction_252(Date from, Date to);

}  // namespace imargin
