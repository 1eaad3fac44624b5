#include "emseg/pipeline/csv.hpp"

#include <cmath>
#include <fmt/format.h>
#include <sstream>

#include "emseg/binary_io.hpp"
#include "emseg/errors.hpp"

namespace emseg::pipeline {
namespace {

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

std::string join_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out += (i ? "," : "") + cells[i];
    }
    return out;
}

} // namespace

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw FormatError("missing CSV column '" + std::string(name) + "'");
}

std::string CsvTable::to_string() const {
    std::string out = join_row(header) + "\n";
    for (const auto& row : rows) {
        out += join_row(row) + "\n";
    }
    return out;
}

CsvTable parse_csv(std::string_view text, const std::string& source) {
    CsvTable table;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split_row(line);
        if (table.header.empty()) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw FormatError(fmt::format("{}:{}: expected {} cells, found {}", source, number,
                                          table.header.size(), cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.header.empty()) {
        throw FormatError(source + ": empty CSV file");
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    return parse_csv(read_text_file(path), path.string());
}

std::string format_number(double value) {
    if (std::isnan(value)) {
        return "nan";
    }
    return fmt::format("{}", value);
}

} // namespace emseg::pipeline
