#include "imargin/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "imargin/errors.hpp"

namespace imargin::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        std::string field = line.substr(start, pos == std::string::npos ? pos : pos - start);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\r'))
            field.pop_back();
        std::size_t lead = 0;
        while (lead < field.size() && field[lead] == ' ') ++lead;
        out.push_back(field.substr(lead));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw ConfigError("missing CSV column '" + std::string(name) + "'");
}

Table read(std::istream& in) {
    Table t;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            std::ostringstream msg;
            msg << "CSV line " << line_no << ": expected " << t.header.size()
                << " fields, got " << fields.size();
            throw ConfigError(msg.str());
        }
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw ConfigError("CSV input has no header line");
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return read(in);
}

double to_double(const std::string& field, std::size_t row, std::string_view column) {
    try {
        return parse_double(field);
    } catch (const Error&) {
        std::ostringstream msg;
        msg << "row " << row << ", column '" << column << "': not a number: '" << field << "'";
        throw ConfigError(msg.str());
    }
}

long to_long(const std::string& field, std::size_t row, std::string_view column) {
    long value = 0;
    const char* end = field.data() + field.size();
    const char* begin = field.data();
    if (begin != end && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        std::ostringstream msg;
        msg << "row " << row << ", column '" << column << "': not an integer: '" << field
            << "'";
        throw ConfigError(msg.str());
    }
    return value;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    if (begin != end && *begin == '+') ++begin;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || begin == end)
        throw ConfigError("not a number: '" + std::string(text) + "'");
    return value;
}

}  // namespace imargin::csv
