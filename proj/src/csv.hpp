#pragma once

// Minimal CSV helpers shared by the entity/feature/label readers. No quoting:
// every file the toolkit reads or writes is purely numeric plus a header.

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "histograph/error.hpp"

namespace histograph::csv {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::vector<std::string>> parse(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string_view::npos) {
                cells.push_back(trim(line.substr(start)));
                break;
            }
            cells.push_back(trim(line.substr(start, comma - start)));
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline double parse_double(const std::string& cell, const std::string& what) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw SchemaError(what, "non-numeric cell \"" + cell + "\"");
    }
    return value;
}

inline long long parse_int(const std::string& cell, const std::string& what) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw SchemaError(what, "non-integer cell \"" + cell + "\"");
    }
    return value;
}

/// 17 significant digits: round-trips every float64.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace histograph::csv
