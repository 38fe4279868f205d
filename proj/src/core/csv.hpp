#pragma once

#include <string>
#include <vector>

namespace dnr {

// Minimal CSV: comma separated, first row is a mandatory header, values
// never contain commas or quotes. Enough for the cohort/result tables we
// exchange; not a general RFC 4180 reader.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable read_csv(const std::string& path);

std::string csv_to_string(const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

double csv_double(const CsvTable& table, std::size_t row, int col,
                  const std::string& origin);

}  // namespace dnr
