#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace emseg::pipeline {

/// Comma-separated table without quoting; cells never contain commas.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws FormatError if absent.
    std::size_t column(std::string_view name) const;
    std::string to_string() const;
};

/// Throws IoError if unreadable, FormatError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text, const std::string& source);

/// Shortest round-trip decimal text; "nan" for NaN.
std::string format_number(double value);

} // namespace emseg::pipeline
