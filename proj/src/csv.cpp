#include "cfaudit/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "cfaudit/error.hpp"

namespace cfaudit {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

CsvTable parse_csv(std::string_view text) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string fieldbuf;
  bool in_quotes = false;
  bool record_open = false;

  auto finish_field = [&] {
    record.push_back(std::move(fieldbuf));
    fieldbuf.clear();
  };
  auto finish_record = [&] {
    finish_field();
    records.push_back(std::move(record));
    record.clear();
    record_open = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          fieldbuf.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        fieldbuf.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"': in_quotes = true; record_open = true; break;
      case ',': finish_field(); record_open = true; break;
      case '\r': break;
      case '\n':
        if (record_open || !fieldbuf.empty() || !record.empty()) finish_record();
        break;
      default: fieldbuf.push_back(ch); record_open = true;
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (record_open || !fieldbuf.empty() || !record.empty()) finish_record();

  CsvTable table;
  if (records.empty()) throw DataError("csv: missing header row");
  table.header = std::move(records.front());
  for (auto& h : table.header) h = std::string(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataError("csv: row " + std::to_string(r) + " has " +
                      std::to_string(records[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
  if (!out_) throw DataError("cannot write file: " + path.string());
}

CsvWriter& CsvWriter::field(std::string_view s) {
  if (!first_) out_ << ',';
  first_ = false;
  if (s.find_first_of(",\"\n\r") != std::string_view::npos) {
    out_ << '"';
    for (char ch : s) {
      if (ch == '"') out_ << '"';
      out_ << ch;
    }
    out_ << '"';
  } else {
    out_ << s;
  }
  return *this;
}

CsvWriter& CsvWriter::field(double v) { return field(std::string_view(format_double(v))); }

CsvWriter& CsvWriter::field(long long v) { return field(std::string_view(std::to_string(v))); }

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (const auto& f : fields) field(std::string_view(f));
  end_row();
}

}  // namespace cfaudit
