#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfaudit/matrix.hpp"

namespace cfaudit {

enum class TreatmentType { kBinary, kContinuous };

std::string_view treatment_type_name(TreatmentType t);

// Which columns of an input file play which role.
struct SchemaConfig {
  std::string treatment_column;
  std::string outcome_column;
  // Empty: every column that is not treatment, outcome or excluded.
  std::vector<std::string> feature_columns;
  std::vector<std::string> excluded_columns;
  // Covariates for the nuisance models. Empty: same as feature_columns.
  std::vector<std::string> nuisance_columns;
  std::string missing_token;
};

// Parses "key = value[, value...]" lines. Keys: treatment, outcome, features,
// exclude, nuisance_features, missing_token. '#' starts a comment.
SchemaConfig parse_schema(std::string_view text);
SchemaConfig load_schema(const std::filesystem::path& path);

struct Dataset {
  Matrix x;                        // n x p heterogeneity covariates
  std::vector<double> w;           // treatment
  std::vector<double> y;           // outcome
  std::vector<std::string> feature_names;
  std::vector<std::uint8_t> missing_mask;  // n x p, row-major, pre-imputation record

  // Separate nuisance covariates; empty matrix means "use x".
  Matrix x_nuisance;
  std::vector<std::string> nuisance_names;
  std::vector<std::uint8_t> nuisance_missing_mask;

  std::string treatment_name = "w";
  std::string outcome_name = "y";

  std::size_t n() const { return w.size(); }
  std::size_t p() const { return x.cols(); }
  const Matrix& nuisance_x() const { return x_nuisance.empty() ? x : x_nuisance; }
  bool missing(std::size_t i, std::size_t j) const { return missing_mask[i * p() + j] != 0; }

  // Binary iff the observed support of w is a subset of {0, 1}.
  TreatmentType treatment_type() const;

  // Throws DataError when the shape invariants do not hold.
  void validate() const;

  // Copy with the given treatment or outcome vector swapped in.
  Dataset with_treatment(std::vector<double> new_w) const;
  Dataset with_outcome(std::vector<double> new_y) const;
};

Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& schema);

// Writes treatment, outcome, then feature columns. Missing cells (per the mask)
// are written as missing_token.
void write_csv(const std::filesystem::path& path, const Dataset& d,
               const std::string& missing_token = "");

// Replaces every missing covariate with its column median over observed
// values. Throws DataError for a column with no observed values.
Dataset impute_median(const Dataset& d);

// Appends a 0/1 column "<name>_missing" for every covariate with at least one
// missing cell, in x and (when present) in the nuisance covariates.
Dataset add_missing_indicators(const Dataset& d);

// Median of the values (mean of the two central order statistics when even).
double median(std::vector<double> values);

struct ColumnSummary {
  std::string name;
  std::size_t count = 0;       // observed (non-missing) values
  double missing_fraction = 0.0;
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

struct DatasetSummary {
  std::size_t n = 0;
  std::vector<ColumnSummary> columns;  // treatment, outcome, then features
  TreatmentType treatment_type = TreatmentType::kContinuous;
};

DatasetSummary summarize(const Dataset& d);

}  // namespace cfaudit
