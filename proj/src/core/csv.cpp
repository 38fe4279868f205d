#include "core/csv.hpp"

#include <charconv>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace dnr {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  int c = column(name);
  if (c < 0) throw InvalidInput("missing required column '" + name + "'");
  return c;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable table;
  std::size_t pos = 0;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (!saw_header) {
      table.header = std::move(fields);
      saw_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      throw InvalidInput(origin + ":" + std::to_string(line_no) + ": row has " +
                         std::to_string(fields.size()) + " fields, header has " +
                         std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  if (!saw_header) throw InvalidInput(origin + ": empty file, header required");
  return table;
}

CsvTable read_csv(const std::string& path) {
  return parse_csv(read_file(path), path);
}

std::string csv_to_string(const CsvTable& table) {
  std::string out;
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out.push_back(',');
      out += fields[i];
    }
    out.push_back('\n');
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
  return out;
}

void write_csv(const std::string& path, const CsvTable& table) {
  atomic_write_file(path, csv_to_string(table));
}

double csv_double(const CsvTable& table, std::size_t row, int col,
                  const std::string& origin) {
  const std::string& s = table.rows[row][static_cast<std::size_t>(col)];
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput(origin + ": '" + s + "' is not a number (row " +
                       std::to_string(row + 2) + ", column '" +
                       table.header[static_cast<std::size_t>(col)] + "')");
  return v;
}

}  // namespace dnr
