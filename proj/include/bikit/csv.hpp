#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace bikit::csv {

/// Splits one CSV line on commas. The bikit file formats never quote
/// fields (ids, paths and class names are comma-free by contract), so a
/// plain split is the whole grammar.
inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Reads a line and strips a trailing '\r' so CRLF files parse the same
/// as LF files.
inline bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

} // namespace bikit::csv
