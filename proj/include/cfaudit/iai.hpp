#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfaudit/causal.hpp"
#include "cfaudit/xai.hpp"

namespace cfaudit::iai {

// Member tree whose honest leaf effects minimize the R-loss on the full sample.
struct RepresentativeTree {
  std::size_t index = 0;
  double r_loss = 0.0;
  std::vector<double> per_tree_loss;
};

RepresentativeTree representative_tree(const CausalForest& cf, const Matrix& x,
                                       const CenteredData& c);

// Student settings for distillation: one unpruned-to-depth CART tree on all rows.
ForestParams default_student_params();

// Fits a variance-splitting tree on (x, teacher) with honesty off.
Tree distill_tree(std::span<const double> teacher, const Matrix& x, const ForestParams& student);
// Teacher predictions are the in-sample plug-in estimates sum_i alpha_i(x) Gamma_i.
Tree distill_tree(const CausalForest& cf, const DrScores& g, const Matrix& x,
                  const ForestParams& student = default_student_params());

std::vector<double> predict_tree(const Tree& t, const Matrix& x);

struct QuantileSummary {
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

struct RashomonPoint {
  std::string label;  // ensemble size, or "distilled"
  std::size_t ensemble_size = 0;  // 0 for the distilled point
  bool distilled = false;
  double r_loss = 0.0;
  double relative_r_loss = 0.0;       // r_loss - baseline r_loss
  QuantileSummary abs_error;          // |tau_model - tau_baseline|, top 2.5% trimmed
  QuantileSummary abs_error_untrimmed;
  QuantileSummary pct_error;          // 100 |tau_model - tau_baseline| / |tau_baseline|, trimmed
  QuantileSummary pct_error_untrimmed;
};

struct RashomonParams {
  std::vector<std::size_t> sizes;
  std::size_t baseline_size = 2000;
  ForestParams forest;  // num_trees and seed are overridden per point
  bool include_distilled = true;
  ForestParams student = default_student_params();
  std::uint64_t seed = 42;
};

inline constexpr double kTrimFraction = 0.025;

// Drops the largest ceil(fraction * n) values, then takes quartiles.
QuantileSummary trimmed_quantiles(std::vector<double> v, double fraction);

// Every forest reuses the centered data and scores, so all points share the
// same nuisance functions. R-loss uses in-sample predictions on d.x; error
// quantiles compare predictions on eval_x against the baseline's.
std::vector<RashomonPoint> rashomon_curve(const Dataset& d, const CenteredData& c,
                                          const DrScores& g, const Matrix& eval_x,
                                          const RashomonParams& params);

struct FeatureSelection {
  std::vector<std::string> names;
  std::vector<std::size_t> features;
  bool empty_warning = false;
};

// Features with importance strictly above the mean importance 1/p.
FeatureSelection select_features_by_importance(const xai::ImportanceTable& t);

struct BlpRow {
  std::string term;
  double coefficient = 0.0;
  double std_error = 0.0;
  double t_stat = 0.0;
  double p_value = 0.0;
};

struct BlpResult {
  std::vector<BlpRow> rows;  // intercept first
  std::size_t n_used = 0;
  std::vector<std::string> excluded_categories;  // "feature=level (count)"
  std::vector<std::string> reference_levels;     // "feature=level"
  std::vector<double> residuals;                 // rows actually used, in order
  std::vector<std::size_t> used_rows;
  Matrix design;
};

struct BlpSpec {
  std::vector<std::size_t> features;
  std::vector<bool> categorical;  // parallel to features; empty means all numeric
  std::size_t min_category_count = 100;
};

// OLS of the scores on an intercept plus the chosen columns, with HC3
// standard errors and two-sided normal p-values. Throws NumericalError on a
// rank-deficient design, naming the offending columns.
BlpResult blp(std::span<const double> gamma, const Matrix& x,
              const std::vector<std::string>& names, const BlpSpec& spec);

std::string significance_stars(double p_value);

}  // namespace cfaudit::iai
