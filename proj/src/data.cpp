#include "cfaudit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cfaudit/csv.hpp"
#include "cfaudit/error.hpp"

namespace cfaudit {

std::string_view treatment_type_name(TreatmentType t) {
  return t == TreatmentType::kBinary ? "binary" : "continuous";
}

namespace {

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto piece = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

SchemaConfig parse_schema(std::string_view text) {
  SchemaConfig schema;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (const auto hash = l.find('#'); hash != l.npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    const auto eq = l.find('=');
    if (eq == l.npos) {
      throw DataError("schema line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key(trim(l.substr(0, eq)));
    const std::string_view value = trim(l.substr(eq + 1));
    if (key == "treatment") {
      schema.treatment_column = std::string(value);
    } else if (key == "outcome") {
      schema.outcome_column = std::string(value);
    } else if (key == "features") {
      schema.feature_columns = split_list(value);
    } else if (key == "exclude") {
      schema.excluded_columns = split_list(value);
    } else if (key == "nuisance_features") {
      schema.nuisance_columns = split_list(value);
    } else if (key == "missing_token") {
      schema.missing_token = std::string(value);
    } else {
      throw DataError("schema line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return schema;
}

SchemaConfig load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

TreatmentType Dataset::treatment_type() const {
  const bool binary = std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0 || v == 1.0; });
  return binary ? TreatmentType::kBinary : TreatmentType::kContinuous;
}

void Dataset::validate() const {
  const std::size_t n = w.size();
  if (n == 0) throw DataError("dataset has no rows");
  if (y.size() != n || x.rows() != n) throw DataError("dataset: x, w, y lengths differ");
  if (x.cols() == 0) throw DataError("dataset has no feature columns");
  if (feature_names.size() != x.cols()) throw DataError("dataset: feature name count mismatch");
  if (missing_mask.size() != n * x.cols()) throw DataError("dataset: missing mask shape mismatch");
  if (!x_nuisance.empty()) {
    if (x_nuisance.rows() != n) throw DataError("dataset: nuisance covariate rows mismatch");
    if (nuisance_names.size() != x_nuisance.cols()) {
      throw DataError("dataset: nuisance name count mismatch");
    }
  }
}

Dataset Dataset::with_treatment(std::vector<double> new_w) const {
  if (new_w.size() != n()) throw DataError("with_treatment: length mismatch");
  Dataset out = *this;
  out.w = std::move(new_w);
  return out;
}

Dataset Dataset::with_outcome(std::vector<double> new_y) const {
  if (new_y.size() != n()) throw DataError("with_outcome: length mismatch");
  Dataset out = *this;
  out.y = std::move(new_y);
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& schema) {
  if (!std::filesystem::exists(path)) throw DataError("input file not found: " + path.string());
  const CsvTable table = read_csv(path);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (!index.emplace(table.header[c], c).second) {
      throw DataError("duplicate column in header: " + table.header[c]);
    }
  }
  auto column_of = [&](const std::string& name, const char* role) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw DataError(std::string("schema ") + role + " column '" + name + "' not in header of " +
                      path.string());
    }
    return it->second;
  };

  if (schema.treatment_column.empty()) throw DataError("schema: treatment column not set");
  if (schema.outcome_column.empty()) throw DataError("schema: outcome column not set");
  const std::size_t wcol = column_of(schema.treatment_column, "treatment");
  const std::size_t ycol = column_of(schema.outcome_column, "outcome");
  if (wcol == ycol) throw DataError("schema: treatment and outcome are the same column");

  std::set<std::size_t> excluded;
  for (const auto& name : schema.excluded_columns) excluded.insert(column_of(name, "excluded"));

  auto resolve = [&](const std::vector<std::string>& names, const char* role) {
    std::vector<std::size_t> cols;
    if (names.empty()) {
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c != wcol && c != ycol && !excluded.count(c)) cols.push_back(c);
      }
    } else {
      for (const auto& name : names) {
        const std::size_t c = column_of(name, role);
        if (c == wcol || c == ycol || excluded.count(c)) {
          throw DataError(std::string("schema: ") + role + " column '" + name +
                          "' overlaps treatment/outcome/excluded");
        }
        if (std::find(cols.begin(), cols.end(), c) != cols.end()) {
          throw DataError(std::string("schema: ") + role + " column '" + name + "' listed twice");
        }
        cols.push_back(c);
      }
    }
    return cols;
  };
  const auto feature_cols = resolve(schema.feature_columns, "feature");
  if (feature_cols.empty()) throw DataError("schema: no feature columns");

  const std::size_t n = table.rows.size();
  if (n == 0) throw DataError("input file has no data rows: " + path.string());

  auto parse_cell = [&](std::size_t r, std::size_t c, bool allow_missing, bool& is_missing) {
    const std::string_view cell = trim(table.rows[r][c]);
    is_missing = cell == trim(schema.missing_token);
    if (is_missing) {
      if (!allow_missing) {
        throw DataError("missing value in column '" + table.header[c] + "' row " +
                        std::to_string(r + 1) + " (treatment/outcome must be observed)");
      }
      return std::numeric_limits<double>::quiet_NaN();
    }
    const auto v = parse_double(cell);
    if (!v || !std::isfinite(*v)) {
      throw DataError("non-numeric value '" + std::string(cell) + "' in column '" +
                      table.header[c] + "' row " + std::to_string(r + 1));
    }
    return *v;
  };

  auto build = [&](const std::vector<std::size_t>& cols, Matrix& x, std::vector<std::string>& names,
                   std::vector<std::uint8_t>& mask) {
    x = Matrix(n, cols.size());
    mask.assign(n * cols.size(), 0);
    names.clear();
    for (auto c : cols) names.push_back(table.header[c]);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < cols.size(); ++k) {
        bool miss = false;
        x(r, k) = parse_cell(r, cols[k], true, miss);
        mask[r * cols.size() + k] = miss ? 1 : 0;
      }
    }
  };

  Dataset d;
  d.treatment_name = schema.treatment_column;
  d.outcome_name = schema.outcome_column;
  d.w.resize(n);
  d.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    bool miss = false;
    d.w[r] = parse_cell(r, wcol, false, miss);
    d.y[r] = parse_cell(r, ycol, false, miss);
  }
  build(feature_cols, d.x, d.feature_names, d.missing_mask);
  if (!schema.nuisance_columns.empty()) {
    build(resolve(schema.nuisance_columns, "nuisance feature"), d.x_nuisance, d.nuisance_names,
          d.nuisance_missing_mask);
  }
  d.validate();
  return d;
}

void write_csv(const std::filesystem::path& path, const Dataset& d,
               const std::string& missing_token) {
  CsvWriter out(path);
  out.field(d.treatment_name).field(d.outcome_name);
  for (const auto& name : d.feature_names) out.field(name);
  out.end_row();
  for (std::size_t i = 0; i < d.n(); ++i) {
    out.field(d.w[i]).field(d.y[i]);
    for (std::size_t j = 0; j < d.p(); ++j) {
      if (d.missing(i, j) && std::isnan(d.x(i, j))) {
        out.field(std::string_view(missing_token));
      } else {
        out.field(d.x(i, j));
      }
    }
    out.end_row();
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return (lower + upper) / 2.0;
}

namespace {

void impute_columns(Matrix& x, const std::vector<std::uint8_t>& mask,
                    const std::vector<std::string>& names) {
  const std::size_t n = x.rows(), p = x.cols();
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> observed;
    bool any_missing = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i * p + j] || std::isnan(x(i, j))) {
        any_missing = true;
      } else {
        observed.push_back(x(i, j));
      }
    }
    if (!any_missing) continue;
    if (observed.empty()) throw DataError("column '" + names[j] + "' is entirely missing");
    const double m = median(observed);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i * p + j] || std::isnan(x(i, j))) x(i, j) = m;
    }
  }
}

}  // namespace

namespace {

void append_indicators(Matrix& x, std::vector<std::uint8_t>& mask, std::vector<std::string>& names) {
  const std::size_t n = x.rows(), p = x.cols();
  std::vector<std::size_t> flagged;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i * p + j]) {
        flagged.push_back(j);
        break;
      }
    }
  }
  if (flagged.empty()) return;
  const std::size_t q = p + flagged.size();
  Matrix wide(n, q);
  std::vector<std::uint8_t> wide_mask(n * q, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      wide(i, j) = x(i, j);
      wide_mask[i * q + j] = mask[i * p + j];
    }
    for (std::size_t k = 0; k < flagged.size(); ++k) {
      wide(i, p + k) = mask[i * p + flagged[k]] ? 1.0 : 0.0;
    }
  }
  for (std::size_t j : flagged) names.push_back(names[j] + "_missing");
  x = std::move(wide);
  mask = std::move(wide_mask);
}

}  // namespace

Dataset add_missing_indicators(const Dataset& d) {
  Dataset out = d;
  append_indicators(out.x, out.missing_mask, out.feature_names);
  if (!out.x_nuisance.empty()) {
    append_indicators(out.x_nuisance, out.nuisance_missing_mask, out.nuisance_names);
  }
  return out;
}

Dataset impute_median(const Dataset& d) {
  Dataset out = d;
  // Medians come from the originally observed cells, so re-imputing an
  // imputed dataset is a no-op.
  Matrix scratch = d.x;
  for (std::size_t k = 0; k < d.missing_mask.size(); ++k) {
    if (d.missing_mask[k]) scratch.data()[k] = std::numeric_limits<double>::quiet_NaN();
  }
  impute_columns(scratch, d.missing_mask, d.feature_names);
  out.x = std::move(scratch);
  if (!d.x_nuisance.empty()) {
    Matrix nx = d.x_nuisance;
    for (std::size_t k = 0; k < d.nuisance_missing_mask.size(); ++k) {
      if (d.nuisance_missing_mask[k]) nx.data()[k] = std::numeric_limits<double>::quiet_NaN();
    }
    impute_columns(nx, d.nuisance_missing_mask, d.nuisance_names);
    out.x_nuisance = std::move(nx);
  }
  return out;
}

DatasetSummary summarize(const Dataset& d) {
  DatasetSummary s;
  s.n = d.n();
  s.treatment_type = d.treatment_type();
  auto column = [&](const std::string& name, const std::vector<double>& values,
                    const std::vector<bool>& miss) {
    ColumnSummary c;
    c.name = name;
    std::vector<double> observed;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!miss[i]) observed.push_back(values[i]);
    }
    c.count = observed.size();
    c.missing_fraction =
        values.empty() ? 0.0 : static_cast<double>(values.size() - observed.size()) / values.size();
    if (!observed.empty()) {
      const auto [lo, hi] = std::minmax_element(observed.begin(), observed.end());
      c.min = *lo;
      c.max = *hi;
      c.median = median(observed);
    } else {
      c.min = c.max = c.median = std::numeric_limits<double>::quiet_NaN();
    }
    return c;
  };
  const std::vector<bool> none(d.n(), false);
  s.columns.push_back(column(d.treatment_name, d.w, none));
  s.columns.push_back(column(d.outcome_name, d.y, none));
  for (std::size_t j = 0; j < d.p(); ++j) {
    std::vector<bool> miss(d.n());
    for (std::size_t i = 0; i < d.n(); ++i) miss[i] = d.missing(i, j);
    s.columns.push_back(column(d.feature_names[j], d.x.column(j), miss));
  }
  return s;
}

}  // namespace cfaudit
