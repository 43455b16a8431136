#pragma once

#include <string>
#include <vector>

namespace svmorph {

// Minimal CSV support for the artifact's tabular outputs. No quoting: field
// values must not contain commas or newlines (all generated names are safe).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Column index by header name; throws DataError if absent.
    std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

// Shortest decimal form that parses back to the same double.
std::string csv_num(double v);
std::string csv_int(long long v);

} // namespace svmorph
