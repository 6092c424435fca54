#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace imargin::csv {

// Minimal reader for the plain comma-separated files used by the library:
// one header line, no quoting, no embedded commas.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws ConfigError if absent.
    std::size_t column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

// Throws ConfigError naming the row and column on malformed numbers.
double to_double(const std::string& field, std::size_t row, std::string_view column);
long to_long(const std::string& field, std::size_t row, std::string_view column);

// Shortest decimal text that parses back to the same double.
std::string format_double(double x);
// Parses text written by format_double (or any decimal) exactly.
double parse_double(std::string_view text);

}  // namespace imargin::csv
