#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cfaudit {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 reader: comma delimiter, optional double-quoted fields, LF or CRLF
// line endings, leading UTF-8 BOM ignored. Throws DataError on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

// Shortest decimal text that parses back to the identical double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view s);

// Streams rows to a file, quoting fields only when they need it.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  CsvWriter& field(std::string_view s);
  CsvWriter& field(double v);
  CsvWriter& field(long long v);
  CsvWriter& field(std::size_t v) { return field(static_cast<long long>(v)); }
  CsvWriter& field(int v) { return field(static_cast<long long>(v)); }
  void end_row();

  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace cfaudit
