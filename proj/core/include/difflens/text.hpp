#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace difflens {

// Shortest round-trip decimal representation; stable across runs.
std::string format_real(double v);

using CsvRow = std::vector<std::string>;

struct CsvTable {
    CsvRow header;
    std::vector<CsvRow> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row

    // Column index by name, throws Error(validation) when absent.
    std::size_t column(std::string_view name, const std::string& file) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);
std::string csv_escape(std::string_view field);
std::string csv_line(const CsvRow& fields);

bool parse_index(std::string_view s, long long& out);

}  // namespace difflens
