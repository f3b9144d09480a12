#pragma once

#include <string>
#include <vector>

#include "cfaudit/diagnostics.hpp"
#include "cfaudit/forest.hpp"
#include "cfaudit/iai.hpp"
#include "cfaudit/xai.hpp"

namespace cfaudit::report {

// Column-aligned plain text. Cells that parse as numbers are right-aligned.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add_row(std::vector<std::string> row);
  std::string render() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Fixed-point with `digits` decimals, for human-readable tables only.
std::string fixed(double v, int digits = 3);

std::string importance_text(const xai::ImportanceTable& t, std::size_t top = 0);
std::string blp_text(const iai::BlpResult& r);

// Indented if/else rendering of a tree using feature names.
std::string tree_text(const Tree& t, const std::vector<std::string>& names);
// Nested JSON: {"feature", "threshold", "value", "samples", "left", "right"} or
// {"leaf": true, "value", "samples"}.
std::string tree_json(const Tree& t, const std::vector<std::string>& names);

// Minimal standalone SVG documents.
std::string svg_waterfall(const std::vector<xai::WaterfallBar>& bars, double base,
                          double prediction);
std::string svg_beeswarm(const xai::BeeswarmTable& t);
std::string svg_rashomon(const std::vector<iai::RashomonPoint>& points);
std::string svg_profile(const std::vector<diagnostics::ProfileBin>& bins, const std::string& title);

}  // namespace cfaudit::report
