#include "cfaudit/iai.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "cfaudit/csv.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/parallel.hpp"
#include "cfaudit/rng.hpp"
#include "cfaudit/stats.hpp"

namespace cfaudit::iai {

RepresentativeTree representative_tree(const CausalForest& cf, const Matrix& x,
                                       const CenteredData& c) {
  const Forest& f = cf.forest;
  if (f.empty()) throw DataError("representative_tree: empty forest");
  if (x.rows() != c.n() || x.cols() != f.num_features()) {
    throw DataError("representative_tree: covariates do not match the centered data");
  }
  RepresentativeTree out;
  out.per_tree_loss.resize(f.size());
  parallel_for(f.size(), [&](std::size_t b) {
    const Tree& t = f.tree(b);
    std::vector<double> pred(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) pred[i] = t.predict(x.row(i));
    out.per_tree_loss[b] = r_loss(pred, c.y_tilde, c.w_tilde);
  });
  // Strict comparison keeps the lowest index among ties.
  for (std::size_t b = 1; b < f.size(); ++b) {
    if (out.per_tree_loss[b] < out.per_tree_loss[out.index]) out.index = b;
  }
  out.r_loss = out.per_tree_loss[out.index];
  return out;
}

ForestParams default_student_params() {
  ForestParams p;
  p.num_trees = 1;
  p.subsample_ratio = 1.0;
  p.honesty = false;
  p.max_depth = 4;
  p.min_leaf_size = 5;
  p.mtry = std::numeric_limits<std::size_t>::max();  // every feature
  return p;
}

Tree distill_tree(std::span<const double> teacher, const Matrix& x, const ForestParams& student) {
  if (teacher.size() != x.rows()) throw DataError("distill_tree: one teacher value per row");
  if (x.rows() == 0) throw DataError("distill_tree: no rows");
  std::vector<std::uint32_t> ids(x.rows());
  std::iota(ids.begin(), ids.end(), 0U);
  return grow_tree(x, variance_targets(teacher), SplitRule::kVariance, ids, ids, student,
                   mix_seed(student.seed));
}

Tree distill_tree(const CausalForest& cf, const DrScores& g, const Matrix& x,
                  const ForestParams& student) {
  const auto teacher = CatePredictor(cf, g).predict(x);
  return distill_tree(teacher, x, student);
}

std::vector<double> predict_tree(const Tree& t, const Matrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = t.predict(x.row(i));
  return out;
}

QuantileSummary trimmed_quantiles(std::vector<double> v, double fraction) {
  std::erase_if(v, [](double e) { return !std::isfinite(e); });
  if (v.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan};
  }
  std::sort(v.begin(), v.end());
  const auto drop = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size())));
  if (drop > 0 && drop < v.size()) v.resize(v.size() - drop);
  return {stats::quantile_sorted(v, 0.25), stats::quantile_sorted(v, 0.5),
          stats::quantile_sorted(v, 0.75)};
}

namespace {

void fill_errors(RashomonPoint& pt, std::span<const double> model, std::span<const double> base) {
  std::vector<double> abs_err(model.size()), pct_err;
  for (std::size_t i = 0; i < model.size(); ++i) {
    abs_err[i] = std::abs(model[i] - base[i]);
    if (base[i] != 0.0) pct_err.push_back(100.0 * abs_err[i] / std::abs(base[i]));
  }
  pt.abs_error = trimmed_quantiles(abs_err, kTrimFraction);
  pt.abs_error_untrimmed = trimmed_quantiles(abs_err, 0.0);
  pt.pct_error = trimmed_quantiles(pct_err, kTrimFraction);
  pt.pct_error_untrimmed = trimmed_quantiles(pct_err, 0.0);
}

}  // namespace

std::vector<RashomonPoint> rashomon_curve(const Dataset& d, const CenteredData& c,
                                          const DrScores& g, const Matrix& eval_x,
                                          const RashomonParams& params) {
  if (params.sizes.empty()) throw UsageError("rashomon_curve: no ensemble sizes given");
  for (auto s : params.sizes) {
    if (s == 0 || s > params.baseline_size) {
      throw UsageError("rashomon_curve: sizes must lie in [1, baseline size]");
    }
  }
  if (eval_x.cols() != d.p()) throw DataError("rashomon_curve: evaluation rows have wrong width");

  // Tree b of a forest depends only on (seed, b), so a size-s forest fitted
  // with the shared seed is exactly the first s trees of the baseline.
  ForestParams fp = params.forest;
  fp.num_trees = params.baseline_size;
  fp.seed = derive_seed(params.seed, streams::kRashomon);
  const CausalForest baseline = fit_causal_forest(d, c, fp);

  auto evaluate = [&](const CausalForest& cf, std::vector<double>& train_pred,
                      std::vector<double>& eval_pred) {
    const CatePredictor pred(cf, g);
    train_pred = pred.predict(d.x);
    eval_pred = pred.predict(eval_x);
  };
  std::vector<double> base_train, base_eval;
  evaluate(baseline, base_train, base_eval);
  const double base_loss = r_loss(base_train, c.y_tilde, c.w_tilde);

  std::vector<RashomonPoint> points;
  for (auto s : params.sizes) {
    RashomonPoint pt;
    pt.label = std::to_string(s);
    pt.ensemble_size = s;
    if (s == params.baseline_size) {
      pt.r_loss = base_loss;
      fill_errors(pt, base_eval, base_eval);
    } else {
      ForestParams sub = fp;
      sub.num_trees = s;
      const auto& all = baseline.forest.trees();
      const CausalForest cf{Forest(sub, baseline.forest.rule(), d.n(), d.p(),
                                   std::vector<Tree>(all.begin(), all.begin() + s))};
      std::vector<double> tr, ev;
      evaluate(cf, tr, ev);
      pt.r_loss = r_loss(tr, c.y_tilde, c.w_tilde);
      fill_errors(pt, ev, base_eval);
    }
    pt.relative_r_loss = pt.r_loss - base_loss;
    points.push_back(pt);
  }
  if (params.include_distilled) {
    const Tree student = distill_tree(base_train, d.x, params.student);
    RashomonPoint pt;
    pt.label = "distilled";
    pt.distilled = true;
    pt.r_loss = r_loss(predict_tree(student, d.x), c.y_tilde, c.w_tilde);
    pt.relative_r_loss = pt.r_loss - base_loss;
    fill_errors(pt, predict_tree(student, eval_x), base_eval);
    points.push_back(pt);
  }
  return points;
}

FeatureSelection select_features_by_importance(const xai::ImportanceTable& t) {
  FeatureSelection sel;
  const std::size_t p = t.num_features();
  if (p == 0 || t.degenerate) {
    sel.empty_warning = true;
    return sel;
  }
  // A small margin keeps rounding in the normalization from selecting ties.
  const double threshold = 1.0 / static_cast<double>(p) + 1e-12;
  for (const auto& r : t.rows) {
    if (r.importance > threshold) {
      sel.names.push_back(r.name);
      sel.features.push_back(r.feature);
    }
  }
  sel.empty_warning = sel.features.empty();
  return sel;
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

BlpResult blp(std::span<const double> gamma, const Matrix& x,
              const std::vector<std::string>& names, const BlpSpec& spec) {
  const std::size_t n = x.rows();
  if (gamma.size() != n) throw DataError("blp: one score per row required");
  if (names.size() != x.cols()) throw DataError("blp: one name per column required");
  if (!spec.categorical.empty() && spec.categorical.size() != spec.features.size()) {
    throw UsageError("blp: categorical flags must parallel the feature list");
  }
  for (auto j : spec.features) {
    if (j >= x.cols()) throw UsageError("blp: feature index out of range");
  }
  auto is_cat = [&](std::size_t k) { return !spec.categorical.empty() && spec.categorical[k]; };

  BlpResult res;
  // Rows carrying any rare category level are excluded.
  std::vector<bool> keep(n, true);
  for (std::size_t k = 0; k < spec.features.size(); ++k) {
    if (!is_cat(k)) continue;
    const std::size_t j = spec.features[k];
    std::map<double, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) ++counts[x(i, j)];
    for (const auto& [level, cnt] : counts) {
      if (cnt >= spec.min_category_count) continue;
      res.excluded_categories.push_back(names[j] + "=" + format_double(level) + " (" +
                                        std::to_string(cnt) + ")");
      for (std::size_t i = 0; i < n; ++i) {
        if (x(i, j) == level) keep[i] = false;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) res.used_rows.push_back(i);
  }
  const std::size_t m = res.used_rows.size();
  if (m == 0) throw DataError("blp: no rows left after excluding rare categories");

  // Design columns.
  std::vector<std::string> terms{"(intercept)"};
  std::vector<std::vector<double>> cols{std::vector<double>(m, 1.0)};
  for (std::size_t k = 0; k < spec.features.size(); ++k) {
    const std::size_t j = spec.features[k];
    if (!is_cat(k)) {
      std::vector<double> col(m);
      for (std::size_t r = 0; r < m; ++r) col[r] = x(res.used_rows[r], j);
      terms.push_back(names[j]);
      cols.push_back(std::move(col));
      continue;
    }
    std::map<double, std::size_t> counts;
    for (auto i : res.used_rows) ++counts[x(i, j)];
    double reference = counts.begin()->first;
    for (const auto& [level, cnt] : counts) {
      if (cnt > counts[reference]) reference = level;
    }
    res.reference_levels.push_back(names[j] + "=" + format_double(reference));
    for (const auto& [level, cnt] : counts) {
      if (level == reference) continue;
      std::vector<double> col(m);
      for (std::size_t r = 0; r < m; ++r) col[r] = x(res.used_rows[r], j) == level ? 1.0 : 0.0;
      terms.push_back(names[j] + "=" + format_double(level));
      cols.push_back(std::move(col));
    }
  }
  const std::size_t k = cols.size();
  if (m <= k) throw DataError("blp: need more rows than design columns");

  Eigen::MatrixXd X(m, k);
  Eigen::VectorXd yv(m);
  for (std::size_t r = 0; r < m; ++r) {
    yv(r) = gamma[res.used_rows[r]];
    for (std::size_t c = 0; c < k; ++c) X(r, c) = cols[c][r];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (static_cast<std::size_t>(qr.rank()) < k) {
    // Name columns in design order: each one that lies in the span of the
    // columns kept before it.
    std::string bad;
    std::vector<Eigen::Index> kept;
    for (std::size_t c = 0; c < k; ++c) {
      kept.push_back(static_cast<Eigen::Index>(c));
      Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(kept.size()));
      for (std::size_t j = 0; j < kept.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = X.col(kept[j]);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> part(sub);
      part.setThreshold(qr.threshold());
      if (static_cast<std::size_t>(part.rank()) < kept.size()) {
        kept.pop_back();
        if (!bad.empty()) bad += ", ";
        bad += terms[c];
      }
    }
    throw NumericalError("blp: rank-deficient design; dependent columns: " + bad);
  }
  const Eigen::VectorXd beta = qr.solve(yv);
  const Eigen::VectorXd resid = yv - X * beta;

  // (X'X)^-1 = P R^-1 R^-T P'
  const Eigen::MatrixXd r_upper =
      qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r_upper.template triangularView<Eigen::Upper>().solve(
      Eigen::MatrixXd::Identity(k, k));
  const auto& pm = qr.colsPermutation();
  const Eigen::MatrixXd bread = pm * (r_inv * r_inv.transpose()) * pm.transpose();

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (std::size_t r = 0; r < m; ++r) {
    const Eigen::VectorXd xi = X.row(r).transpose();
    const double h = xi.dot(bread * xi);
    const double denom = 1.0 - h;
    if (!(denom > 1e-12)) continue;  // leverage-one rows have zero residual
    const double u = resid(r) / denom;
    meat.noalias() += (u * u) * (xi * xi.transpose());
  }
  const Eigen::MatrixXd cov = bread * meat * bread;

  for (std::size_t c = 0; c < k; ++c) {
    BlpRow row;
    row.term = terms[c];
    row.coefficient = beta(c);
    row.std_error = std::sqrt(std::max(0.0, cov(c, c)));
    if (row.std_error > 0.0) {
      row.t_stat = row.coefficient / row.std_error;
      row.p_value = std::erfc(std::abs(row.t_stat) / std::sqrt(2.0));
    } else if (row.coefficient != 0.0) {
      row.t_stat = std::copysign(std::numeric_limits<double>::infinity(), row.coefficient);
      row.p_value = 0.0;
    } else {
      row.t_stat = 0.0;
      row.p_value = 1.0;
    }
    res.rows.push_back(row);
  }
  res.n_used = m;
  res.residuals.assign(resid.data(), resid.data() + m);
  res.design = Matrix(m, k);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < k; ++c) res.design(r, c) = X(r, c);
  }
  return res;
}

}  // namespace cfaudit::iai
