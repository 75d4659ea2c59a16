#pragma once

#include <optional>
#include <string>
#include <vector>

namespace statfuse {

/// A parsed CSV file: header row plus string cells. Quoting follows RFC 4180
/// (double quotes, doubled quote escapes); the decimal separator is `.` and
/// the delimiter is `,`.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

/// Strict full-string parse; nullopt on any trailing garbage or empty input.
std::optional<double> parse_double(const std::string& text);

std::string trim(const std::string& text);

}  // namespace statfuse
