#include "cfaudit/causal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfaudit/error.hpp"
#include "cfaudit/kernels.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/rng.hpp"

namespace cfaudit {

std::string_view score_formula_name(ScoreFormula f) {
  switch (f) {
    case ScoreFormula::kAipw: return "aipw";
    case ScoreFormula::kPaper: return "paper";
    case ScoreFormula::kResidual: return "residual";
  }
  return "unknown";
}

ScoreFormula parse_score_formula(std::string_view s) {
  if (s == "aipw") return ScoreFormula::kAipw;
  if (s == "paper") return ScoreFormula::kPaper;
  if (s == "residual") return ScoreFormula::kResidual;
  throw UsageError("unknown score formula '" + std::string(s) + "' (expected paper|aipw|residual)");
}

namespace {

// Out-of-bag predictions with any undefined entry replaced by the prediction
// of the whole forest.
std::vector<double> oob_or_full(const Forest& f, const Matrix& x, std::size_t& backfilled) {
  OobPrediction oob = predict_oob(f, x);
  if (oob.num_undefined() == 0) return std::move(oob.values);
  const std::vector<double> full = predict(f, x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (!oob.defined(i)) {
      oob.values[i] = full[i];
      ++backfilled;
    }
  }
  return std::move(oob.values);
}

// Arm-specific outcome model evaluated for every unit: out-of-bag inside the
// arm, plain prediction outside it.
std::vector<double> arm_predictions(const Forest& f, const Matrix& x,
                                    const std::vector<std::size_t>& arm,
                                    const Matrix& x_arm, std::size_t& backfilled) {
  std::vector<double> out = predict(f, x);
  const std::vector<double> inside = oob_or_full(f, x_arm, backfilled);
  for (std::size_t k = 0; k < arm.size(); ++k) out[arm[k]] = inside[k];
  return out;
}

}  // namespace

LocalCentering local_center(const Dataset& d, const ForestParams& nuisance_params,
                            ClampBounds clamp) {
  d.validate();
  nuisance_params.validate();
  if (!(clamp.lo > 0.0 && clamp.lo < clamp.hi && clamp.hi < 1.0)) {
    throw UsageError("clamp bounds must satisfy 0 < lo < hi < 1");
  }
  const Matrix& xn = d.nuisance_x();
  const std::size_t n = d.n();

  LocalCentering out;
  CenteredData& c = out.centered;
  c.treatment_type = d.treatment_type();
  c.clamp = clamp;

  auto params_for = [&](std::uint64_t stream) {
    ForestParams p = nuisance_params;
    p.seed = derive_seed(nuisance_params.seed, stream);
    return p;
  };

  std::vector<std::size_t> treated, control;
  if (c.treatment_type == TreatmentType::kBinary) {
    for (std::size_t i = 0; i < n; ++i) (d.w[i] == 1.0 ? treated : control).push_back(i);
    if (treated.empty() || control.empty()) {
      throw DataError(std::string("binary treatment is ") +
                      (treated.empty() ? "all-control" : "all-treated") +
                      ": no arm-specific outcome model can be fit");
    }
  }

  out.models.outcome = fit_regression_forest(xn, d.y, params_for(streams::kOutcome));
  out.models.treatment = fit_regression_forest(xn, d.w, params_for(streams::kTreatment));
  c.m_hat = oob_or_full(out.models.outcome, xn, c.oob_backfilled);
  c.e_hat_raw = oob_or_full(out.models.treatment, xn, c.oob_backfilled);
  c.e_hat = c.e_hat_raw;

  if (c.treatment_type == TreatmentType::kBinary) {
    for (std::size_t i = 0; i < n; ++i) {
      if (c.e_hat_raw[i] < clamp.lo || c.e_hat_raw[i] > clamp.hi) {
        c.clamped_units.push_back(static_cast<std::uint32_t>(i));
        c.e_hat[i] = std::clamp(c.e_hat_raw[i], clamp.lo, clamp.hi);
      }
    }
    auto fit_arm = [&](const std::vector<std::size_t>& arm, std::uint64_t stream,
                       std::optional<Forest>& model, std::vector<double>& pred) {
      const Matrix x_arm = xn.select_rows(arm);
      std::vector<double> y_arm(arm.size());
      for (std::size_t k = 0; k < arm.size(); ++k) y_arm[k] = d.y[arm[k]];
      model = fit_regression_forest(x_arm, y_arm, params_for(stream));
      pred = arm_predictions(*model, xn, arm, x_arm, c.oob_backfilled);
    };
    fit_arm(treated, streams::kOutcomeTreated, out.models.outcome_treated, c.m_hat_1);
    fit_arm(control, streams::kOutcomeControl, out.models.outcome_control, c.m_hat_0);
  }

  c.y_tilde.resize(n);
  c.w_tilde.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.y_tilde[i] = d.y[i] - c.m_hat[i];
    c.w_tilde[i] = d.w[i] - c.e_hat[i];
  }
  return out;
}

DrScores dr_scores(const Dataset& d, const CenteredData& c,
                   std::optional<std::span<const double>> tau_hat_oob, ScoreFormula formula) {
  const std::size_t n = d.n();
  if (c.n() != n) throw DataError("dr_scores: centered data and dataset lengths differ");

  DrScores g;
  g.gamma.resize(n);
  const bool binary = c.treatment_type == TreatmentType::kBinary;
  if (!binary) formula = ScoreFormula::kResidual;
  g.formula = formula;

  if (formula == ScoreFormula::kResidual) {
    if (!tau_hat_oob) {
      throw DataError("dr_scores: the residual score needs out-of-bag effect estimates");
    }
    if (tau_hat_oob->size() != n) throw DataError("dr_scores: tau_hat_oob length mismatch");
    const double v = kernels::dot(c.w_tilde, c.w_tilde) / static_cast<double>(n);
    if (!(v > 0.0)) throw NumericalError("dr_scores: residual treatment variance is zero");
    for (std::size_t i = 0; i < n; ++i) {
      const double tau = (*tau_hat_oob)[i];
      g.gamma[i] = tau + c.w_tilde[i] * (c.y_tilde[i] - c.w_tilde[i] * tau) / v;
    }
  } else {
    if (!c.has_arm_models()) throw DataError("dr_scores: arm-specific outcome models missing");
    const kernels::ScoreInputs in{d.w, d.y, c.e_hat, c.m_hat_1, c.m_hat_0};
    if (formula == ScoreFormula::kAipw) {
      kernels::aipw_scores(in, g.gamma);
    } else {
      kernels::paper_scores(in, g.gamma);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(g.gamma[i])) {
      throw NumericalError("dr_scores: non-finite score for unit " + std::to_string(i));
    }
  }
  return g;
}

CausalForest fit_causal_forest(const Dataset& d, const CenteredData& c,
                               const ForestParams& params) {
  if (c.n() != d.n()) throw DataError("fit_causal_forest: centered data from a different dataset");
  return {fit_forest(d.x, rloss_targets(c.y_tilde, c.w_tilde), SplitRule::kRLoss, params)};
}

double KernelWeights::weight_of(std::uint32_t unit) const {
  const auto it = std::lower_bound(entries.begin(), entries.end(), unit,
                                   [](const auto& e, std::uint32_t u) { return e.first < u; });
  return it != entries.end() && it->first == unit ? it->second : 0.0;
}

double KernelWeights::total() const {
  double s = 0.0;
  for (const auto& [unit, w] : entries) s += w;
  return s;
}

namespace {

KernelWeights accumulate_weights(const CausalForest& cf, std::span<const double> x,
                                 std::optional<std::size_t> exclude_unit) {
  const Forest& f = cf.forest;
  if (x.size() != f.num_features()) throw DataError("kernel_weights: covariate length mismatch");
  std::vector<double> dense(f.num_samples(), 0.0);
  std::vector<std::uint32_t> touched;
  std::size_t trees_used = 0;
  for (std::size_t b = 0; b < f.size(); ++b) {
    if (exclude_unit && f.in_subsample(b, *exclude_unit)) continue;
    const Tree& t = f.tree(b);
    const auto members = t.leaf_members(t.find_leaf(x));
    if (members.empty()) continue;
    ++trees_used;
    const double share = 1.0 / static_cast<double>(members.size());
    for (auto i : members) {
      if (dense[i] == 0.0) touched.push_back(i);
      dense[i] += share;
    }
  }
  KernelWeights out;
  if (trees_used == 0) return out;
  std::sort(touched.begin(), touched.end());
  double total = 0.0;
  for (auto i : touched) total += dense[i];
  out.entries.reserve(touched.size());
  for (auto i : touched) out.entries.emplace_back(i, dense[i] / total);
  return out;
}

}  // namespace

KernelWeights kernel_weights(const CausalForest& cf, std::span<const double> x) {
  return accumulate_weights(cf, x, std::nullopt);
}

KernelWeights kernel_weights_oob(const CausalForest& cf, std::span<const double> x,
                                 std::size_t unit) {
  return accumulate_weights(cf, x, unit);
}

CateEstimate estimate_cate(const KernelWeights& alpha, const DrScores& g) {
  CateEstimate est;
  for (const auto& [i, a] : alpha.entries) est.point += a * g.gamma[i];
  double var = 0.0;
  for (const auto& [i, a] : alpha.entries) {
    const double r = g.gamma[i] - est.point;
    var += a * a * r * r;
  }
  est.std_error = std::sqrt(var);
  return est;
}

CateEstimate estimate_cate(const CausalForest& cf, const DrScores& g, std::span<const double> x) {
  if (g.gamma.size() != cf.forest.num_samples()) {
    throw DataError("estimate_cate: scores and forest come from different samples");
  }
  return estimate_cate(kernel_weights(cf, x), g);
}

CateEstimate estimate_ate(const DrScores& g) {
  const std::size_t n = g.gamma.size();
  if (n < 2) throw DataError("estimate_ate: need at least two scores");
  const double mean = kernels::sum(g.gamma) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : g.gamma) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean, sd / std::sqrt(static_cast<double>(n))};
}

CatePredictor::CatePredictor(const CausalForest& cf, const DrScores& g) : cf_(&cf) {
  const Forest& f = cf.forest;
  if (g.gamma.size() != f.num_samples()) {
    throw DataError("CatePredictor: scores and forest come from different samples");
  }
  leaf_mean_.resize(f.size());
  parallel_for(f.size(), [&](std::size_t b) {
    const Tree& t = f.tree(b);
    auto& means = leaf_mean_[b];
    means.assign(t.nodes.size(), 0.0);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (!t.nodes[k].is_leaf()) continue;
      const auto members = t.leaf_members(k);
      if (!members.empty()) means[k] = kernels::gather_sum(g.gamma, members) / members.size();
    }
  });
}

double CatePredictor::predict(std::span<const double> x) const {
  const Forest& f = cf_->forest;
  double acc = 0.0;
  for (std::size_t b = 0; b < f.size(); ++b) acc += leaf_mean_[b][f.tree(b).find_leaf(x)];
  return acc / static_cast<double>(f.size());
}

std::vector<double> CatePredictor::predict(const Matrix& x) const {
  if (x.cols() != cf_->num_features()) throw DataError("CatePredictor: covariate count mismatch");
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), [&](std::size_t r) { out[r] = predict(x.row(r)); });
  return out;
}

std::vector<double> CatePredictor::predict_oob(const Matrix& x_train) const {
  const Forest& f = cf_->forest;
  if (x_train.rows() != f.num_samples()) throw DataError("predict_oob: not the training matrix");
  std::vector<double> out(x_train.rows());
  parallel_for(x_train.rows(), [&](std::size_t i) {
    const auto row = x_train.row(i);
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0; b < f.size(); ++b) {
      if (f.in_subsample(b, i)) continue;
      acc += leaf_mean_[b][f.tree(b).find_leaf(row)];
      ++used;
    }
    out[i] = used > 0 ? acc / static_cast<double>(used) : predict(row);
  });
  return out;
}

std::vector<double> predict_tau_oob(const CausalForest& cf, const Matrix& x_train,
                                    const CenteredData& c) {
  const Forest& f = cf.forest;
  if (x_train.rows() != f.num_samples() || c.n() != f.num_samples()) {
    throw DataError("predict_tau_oob: inputs are not the training sample");
  }
  // Per-leaf means of W~Y~ and W~^2 over the estimation members.
  std::vector<std::vector<std::pair<double, double>>> leaf(f.size());
  parallel_for(f.size(), [&](std::size_t b) {
    const Tree& t = f.tree(b);
    leaf[b].assign(t.nodes.size(), {0.0, 0.0});
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (!t.nodes[k].is_leaf()) continue;
      const auto members = t.leaf_members(k);
      if (members.empty()) continue;
      const double inv = 1.0 / static_cast<double>(members.size());
      leaf[b][k] = {kernels::gather_dot(c.w_tilde, c.y_tilde, members) * inv,
                    kernels::gather_dot(c.w_tilde, c.w_tilde, members) * inv};
    }
  });
  std::vector<double> out(x_train.rows());
  parallel_for(x_train.rows(), [&](std::size_t i) {
    const auto row = x_train.row(i);
    auto solve = [&](bool oob) {
      double num = 0.0, den = 0.0;
      for (std::size_t b = 0; b < f.size(); ++b) {
        if (oob && f.in_subsample(b, i)) continue;
        const auto [a, w] = leaf[b][f.tree(b).find_leaf(row)];
        num += a;
        den += w;
      }
      return std::pair{num, den};
    };
    auto [num, den] = solve(true);
    if (!(den > 0.0)) std::tie(num, den) = solve(false);
    out[i] = den > 0.0 ? num / den : 0.0;
  });
  return out;
}

PipelineResult run_pipeline(const Dataset& d, const PipelineParams& params) {
  ForestParams nuisance = params.nuisance;
  nuisance.seed = params.seed;
  ForestParams causal = params.causal;
  causal.seed = derive_seed(params.seed, streams::kCausal);

  PipelineResult r;
  r.centering = local_center(d, nuisance, params.clamp);
  const CenteredData& c = r.centering.centered;
  r.forest = fit_causal_forest(d, c, causal);
  r.tau_oob = predict_tau_oob(r.forest, d.x, c);
  r.scores = dr_scores(d, c, std::span<const double>(r.tau_oob), params.formula);
  r.ate = estimate_ate(r.scores);
  return r;
}

}  // namespace cfaudit
