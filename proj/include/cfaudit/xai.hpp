#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfaudit/causal.hpp"
#include "cfaudit/matrix.hpp"

namespace cfaudit::xai {

// ---- Depth-weighted split-count importance ----

struct ImportanceRow {
  std::size_t rank = 0;  // 1-based
  std::size_t feature = 0;
  std::string name;
  double importance = 0.0;
};

struct ImportanceTable {
  std::vector<ImportanceRow> rows;  // descending importance, ties by feature index
  bool degenerate = false;          // no splits within max_depth: all zero

  double importance_of(std::size_t feature) const;
  std::size_t num_features() const { return rows.size(); }
};

// raw_j = sum_{d=1..max_depth} decay^(d-1) * (splits on j at depth d) / (splits at depth d),
// normalized to sum to one. Depths with no splits contribute nothing.
ImportanceTable variable_importance(const Forest& f, const std::vector<std::string>& names,
                                    double decay = 0.5, std::size_t max_depth = 4);

// ---- Shapley values ----

// A cooperative game over at most 64 players; coalitions are bitmasks.
class CoalitionGame {
 public:
  virtual ~CoalitionGame() = default;
  virtual std::size_t num_players() const = 0;
  virtual double value(std::uint64_t coalition) const = 0;
};

// Interventional game for an arbitrary prediction function:
// v(S) = mean over background rows b of f(x_S, b_notS).
class FunctionGame final : public CoalitionGame {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  FunctionGame(Fn f, std::vector<double> x, Matrix background);
  std::size_t num_players() const override { return x_.size(); }
  double value(std::uint64_t coalition) const override;

 private:
  Fn f_;
  std::vector<double> x_;
  Matrix background_;
};

// The same game for the causal-forest plug-in prediction sum_i alpha_i(x) Gamma_i.
// Each tree is traversed jointly for x and every background row; a leaf reached
// by mixing the two contributes when the features x was followed on are in S
// and the features the background was followed on are not. v(S) is a sum over
// the distinct (in, out) feature-mask pairs so repeated evaluation is cheap.
class ForestGame final : public CoalitionGame {
 public:
  ForestGame(const CatePredictor& predictor, std::span<const double> x, const Matrix& background);
  std::size_t num_players() const override { return p_; }
  double value(std::uint64_t coalition) const override;

  struct Term {
    std::uint64_t in = 0;
    std::uint64_t out = 0;
    double weight = 0.0;
  };
  const std::vector<Term>& terms() const { return terms_; }

 private:
  std::size_t p_ = 0;
  std::vector<Term> terms_;
};

struct ShapExplanation {
  double base_value = 0.0;             // v(empty set)
  std::vector<double> contributions;   // phi_j
  std::vector<double> std_errors;      // Monte Carlo standard errors; zeros when exact
  double prediction = 0.0;             // v(all players)
  bool exact = true;
};

inline constexpr std::size_t kMaxExactPlayers = 15;

// Enumerates all 2^p coalitions. Throws UsageError for p > kMaxExactPlayers.
ShapExplanation shap_exact(const CoalitionGame& game);
// Permutation sampling with memoized coalition values; the residual of the
// efficiency identity is spread in proportion to |phi_j|.
ShapExplanation shap_sampled(const CoalitionGame& game, std::size_t num_permutations,
                             std::uint64_t seed);

ShapExplanation shap_exact(const CatePredictor& predictor, std::span<const double> x,
                           const Matrix& background);
ShapExplanation shap_sampled(const CatePredictor& predictor, std::span<const double> x,
                             const Matrix& background, std::size_t num_permutations,
                             std::uint64_t seed);

// Up to max_rows rows of x chosen without replacement (all rows, in order, when
// x is small enough).
Matrix select_background(const Matrix& x, std::size_t max_rows, std::uint64_t seed);
inline constexpr std::size_t kDefaultBackgroundRows = 500;

struct WaterfallBar {
  std::string label;
  double feature_value = 0.0;  // NaN for the collapsed bar
  double contribution = 0.0;
};

// Bars sorted by |contribution| descending; features beyond `top` are summed
// into a final "other" bar.
std::vector<WaterfallBar> waterfall(const ShapExplanation& e, std::span<const double> x,
                                    const std::vector<std::string>& names, std::size_t top = 10);

struct BeeswarmFeature {
  std::size_t feature = 0;
  std::string name;
  double mean_abs = 0.0;
  std::vector<std::pair<double, double>> points;  // (feature value, contribution), row order
};

struct BeeswarmTable {
  std::vector<BeeswarmFeature> features;  // descending mean |phi|, ties by index
};

// One explanation per row of x.
BeeswarmTable aggregate_shap(const std::vector<ShapExplanation>& explanations, const Matrix& x,
                             const std::vector<std::string>& names, std::size_t top_k = 20);

}  // namespace cfaudit::xai
