#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "cfaudit/data.hpp"
#include "cfaudit/forest.hpp"

namespace cfaudit {

// Per-unit score constructions.
//   kAipw:     classical augmented IPW, m1-m0 + W(Y-m1)/e - (1-W)(Y-m0)/(1-e)
//   kPaper:    (WY/e - (1-W)Y/(1-e)) + (m1-m0) - (W-e)/(e(1-e)) * (m1-m0)
//   kResidual: continuous treatment, tau + W~(Y~ - W~ tau)/V with V = mean(W~^2)
enum class ScoreFormula { kAipw, kPaper, kResidual };

std::string_view score_formula_name(ScoreFormula f);
ScoreFormula parse_score_formula(std::string_view s);

struct ClampBounds {
  double lo = 0.02;
  double hi = 0.98;
};

// Locally centered data. All vectors are indexed by training unit.
struct CenteredData {
  std::vector<double> y_tilde;    // Y - m_hat
  std::vector<double> w_tilde;    // W - e_hat
  std::vector<double> e_hat;      // out-of-bag treatment prediction (clamped when binary)
  std::vector<double> e_hat_raw;  // before clamping
  std::vector<double> m_hat;      // out-of-bag outcome prediction
  std::vector<double> m_hat_1;    // binary only: outcome model of the treated arm
  std::vector<double> m_hat_0;    // binary only: outcome model of the control arm
  TreatmentType treatment_type = TreatmentType::kContinuous;
  ClampBounds clamp;
  std::vector<std::uint32_t> clamped_units;
  std::size_t oob_backfilled = 0;  // predictions taken from the full forest

  std::size_t n() const { return y_tilde.size(); }
  bool has_arm_models() const { return !m_hat_1.empty(); }
};

struct NuisanceModels {
  Forest outcome;
  Forest treatment;
  std::optional<Forest> outcome_treated;
  std::optional<Forest> outcome_control;
};

struct LocalCentering {
  CenteredData centered;
  NuisanceModels models;
};

// Fits the outcome and treatment forests (plus per-arm outcome forests for a
// binary treatment) on the nuisance covariates and residualizes with their
// out-of-bag predictions. Each forest gets its own stream derived from
// nuisance_params.seed.
LocalCentering local_center(const Dataset& d, const ForestParams& nuisance_params,
                            ClampBounds clamp = {});

struct DrScores {
  std::vector<double> gamma;
  ScoreFormula formula = ScoreFormula::kAipw;
};

// Binary treatment: formula kAipw or kPaper. Continuous treatment: the
// residual score, which needs tau_hat_oob.
DrScores dr_scores(const Dataset& d, const CenteredData& c,
                   std::optional<std::span<const double>> tau_hat_oob,
                   ScoreFormula formula = ScoreFormula::kAipw);

// Causal forest: honest trees grown on (X, Y~, W~) by R-loss reduction. Leaf
// values are the estimation-half weighted least-squares effects.
struct CausalForest {
  Forest forest;
  std::size_t num_features() const { return forest.num_features(); }
};

CausalForest fit_causal_forest(const Dataset& d, const CenteredData& c, const ForestParams& params);

struct KernelWeights {
  std::vector<std::pair<std::uint32_t, double>> entries;  // sorted by unit, weights > 0
  double weight_of(std::uint32_t unit) const;
  double total() const;
};

// alpha_i(x) = (1/B) sum_b 1[i in L_b(x)] / |L_b(x)|, normalized to sum to 1.
KernelWeights kernel_weights(const CausalForest& cf, std::span<const double> x);
// Same, using only trees whose subsample excludes training unit `unit`.
// Returns empty weights when every tree sampled the unit.
KernelWeights kernel_weights_oob(const CausalForest& cf, std::span<const double> x,
                                 std::size_t unit);

struct CateEstimate {
  double point = 0.0;
  double std_error = 0.0;
};

// tau(x) = sum_i alpha_i(x) * Gamma_i, se = sqrt(sum_i alpha_i^2 (Gamma_i - tau)^2)
CateEstimate estimate_cate(const CausalForest& cf, const DrScores& g, std::span<const double> x);
CateEstimate estimate_cate(const KernelWeights& alpha, const DrScores& g);

// Point = mean(Gamma), std_error = sd(Gamma) / sqrt(n).
CateEstimate estimate_ate(const DrScores& g);

// Fast point predictions of sum_i alpha_i(x) Gamma_i from per-leaf score
// means. Agrees with estimate_cate up to rounding.
class CatePredictor {
 public:
  CatePredictor(const CausalForest& cf, const DrScores& g);

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;
  // Training rows, out-of-bag; rows sampled by every tree fall back to all trees.
  std::vector<double> predict_oob(const Matrix& x_train) const;

  const CausalForest& forest() const { return *cf_; }
  // Mean score over the estimation members of leaf `node` in tree `b`.
  double leaf_mean(std::size_t b, std::size_t node) const { return leaf_mean_[b][node]; }

 private:
  const CausalForest* cf_;
  std::vector<std::vector<double>> leaf_mean_;  // [tree][node]
};

// Forest-native effect estimate: kernel-weighted local least squares
// sum alpha W~Y~ / sum alpha W~^2, out-of-bag for training rows. Rows with no
// out-of-bag tree use all trees.
std::vector<double> predict_tau_oob(const CausalForest& cf, const Matrix& x_train,
                                    const CenteredData& c);

struct PipelineParams {
  ForestParams nuisance;
  ForestParams causal = [] {
    ForestParams p;
    p.num_trees = 2000;
    return p;
  }();
  ScoreFormula formula = ScoreFormula::kAipw;
  ClampBounds clamp;
  std::uint64_t seed = 42;
};

struct PipelineResult {
  LocalCentering centering;
  CausalForest forest;
  std::vector<double> tau_oob;
  DrScores scores;
  CateEstimate ate;
};

// Nuisance fits, centering, causal forest, scores and ATE.
PipelineResult run_pipeline(const Dataset& d, const PipelineParams& params);

}  // namespace cfaudit
