// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "cfaudit/causal.hpp"
#include "cfaudit/cli.hpp"
#include "cfaudit/csv.hpp"
#include "cfaudit/data.hpp"
#include "cfaudit/diagnostics.hpp"
#include "cfaudit/iai.hpp"
#include "cfaudit/rng.hpp"
#include "cfaudit/stats.hpp"
#include "cfaudit/synth.hpp"
#include "cfaudit/xai.hpp"

using namespace cfaudit;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [not met]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string count_of(std::size_t k, std::size_t n) {
  return std::to_string(k) + "/" + std::to_string(n);
}

std::vector<std::string> names_for(std::size_t p) {
  std::vector<std::string> v;
  for (std::size_t j = 0; j < p; ++j) v.push_back("x" + std::to_string(j + 1));
  return v;
}

Dataset binary_plugin(const std::vector<double>& w, const std::vector<double>& y, CenteredData& c,
                      std::vector<double> e, std::vector<double> m1, std::vector<double> m0) {
  Dataset d;
  const std::size_t n = w.size();
  d.x = Matrix(n, 1);
  d.feature_names = {"x1"};
  d.missing_mask.assign(n, 0);
  d.w = w;
  d.y = y;
  c = {};
  c.treatment_type = TreatmentType::kBinary;
  c.e_hat = e;
  c.e_hat_raw = e;
  c.m_hat_1 = m1;
  c.m_hat_0 = m0;
  c.m_hat.assign(n, 0.0);
  c.y_tilde = y;
  c.w_tilde.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.w_tilde[i] = w[i] - e[i];
  return d;
}

ForestParams trees(std::size_t n, std::uint64_t seed = 42) {
  ForestParams p;
  p.num_trees = n;
  p.seed = seed;
  return p;
}

// ---- 1 ----
Verdict score_formula() {
  Verdict v;
  CenteredData c;
  const Dataset d = binary_plugin({1, 0, 1}, {2, 2, 1}, c, {0.5, 0.5, 0.5}, {0, 1, 1}, {0, 1, 0});
  const auto g = dr_scores(d, c, std::nullopt, ScoreFormula::kPaper);
  v.require(g.gamma[0] == 4.0 && g.gamma[1] == -4.0 && g.gamma[2] == 1.0,
            "plug-in cases (4, -4, 1) exact");

  const std::size_t n = 1000;
  Rng rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n), y(n), e(n), m1(n), m0(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = 0.05 + 0.9 * u(rng);
    w[i] = u(rng) < e[i] ? 1.0 : 0.0;
    m1[i] = 4.0 * u(rng) - 2.0;
    y[i] = 4.0 * u(rng) - 2.0;
  }
  const Dataset d2 = binary_plugin(w, y, c, e, m1, m0);
  const auto paper = dr_scores(d2, c, std::nullopt, ScoreFormula::kPaper);
  const auto aipw = dr_scores(d2, c, std::nullopt, ScoreFormula::kAipw);
  std::size_t agree = 0, treated = 0, treated_agree = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = std::abs(paper.gamma[i] - aipw.gamma[i]);
    const bool ok = gap <= 1e-12;
    agree += ok;
    worst = std::max(worst, gap);
    if (w[i] == 1.0) {
      ++treated;
      treated_agree += ok;
    }
  }
  v.require(agree == n, "paper == AIPW with m0 = 0 on " + count_of(agree, n) + " units (treated " +
                            count_of(treated_agree, treated) + ", max gap " + fmt("%.3g", worst) +
                            ", control gap is m1/(1-e))");
  return v;
}

// ---- 2 ----
Verdict debiasing() {
  Verdict v;
  std::size_t covered = 0, biased = 0;
  double min_bias = 1e300;
  const std::size_t seeds = 100;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto sample = synth::generate(synth::preset("confounded", 2000, 5, 1000 + s));
    const auto& d = sample.data;
    double y1 = 0, y0 = 0, n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < d.n(); ++i) {
      if (d.w[i] == 1.0) { y1 += d.y[i]; ++n1; } else { y0 += d.y[i]; ++n0; }
    }
    const double bias = std::abs(y1 / n1 - y0 / n0 - 1.0);
    min_bias = std::min(min_bias, bias);
    biased += bias > 0.3;
    // Binary AIPW scores need only the nuisance fits.
    const auto lc = local_center(d, trees(200, s));
    const auto ate = estimate_ate(dr_scores(d, lc.centered, std::nullopt));
    covered += std::abs(ate.point - 1.0) < 3.0 * ate.std_error;
  }
  v.require(biased == seeds, "naive bias > 0.3 on " + count_of(biased, seeds) + " (min " +
                                 fmt("%.3f", min_bias) + ")");
  v.require(covered >= 95, "|ATE - 1| < 3 SE on " + count_of(covered, seeds));
  return v;
}

// ---- 3 ----
double step_rmse(std::size_t n, std::size_t causal_trees, std::uint64_t seed, const Matrix& q) {
  const auto spec = synth::preset("step", n, 5, seed);
  const auto sample = synth::generate(spec);
  PipelineParams pp;
  pp.nuisance.num_trees = 200;
  pp.causal.num_trees = causal_trees;
  pp.seed = seed;
  const auto r = run_pipeline(sample.data, pp);
  const auto tau = CatePredictor(r.forest, r.scores).predict(q);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const double e = tau[i] - synth::oracle_cate(spec, q.row(i));
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(q.rows()));
}

Verdict cate_recovery() {
  Verdict v;
  const Matrix q = synth::draw_covariates(synth::preset("step", 10, 5, 0), 1000, 777);
  std::vector<double> big, small;
  for (std::uint64_t s = 0; s < 10; ++s) {
    big.push_back(step_rmse(2000, 2000, 2000 + s, q));
    small.push_back(step_rmse(500, 100, 2000 + s, q));
  }
  const double mb = stats::quantile(big, 0.5), ms = stats::quantile(small, 0.5);
  v.require(mb < 0.25, "median RMSE n=2000/2000 trees " + fmt("%.3f", mb) + " < 0.25");
  v.require(mb < ms, "smaller than n=500/100 trees " + fmt("%.3f", ms));
  return v;
}

// ---- 4 ----
Verdict shapley() {
  Verdict v;
  const auto sample = synth::generate(synth::preset("linear", 1000, 6, 4));
  PipelineParams pp;
  pp.nuisance.num_trees = 200;
  pp.causal.num_trees = 300;
  const auto r = run_pipeline(sample.data, pp);
  const CatePredictor pred(r.forest, r.scores);
  const Matrix bg = xai::select_background(sample.data.x, 100, 4);
  double worst_eff = 0.0, worst_gap = 0.0;
  for (std::size_t row = 0; row < 20; ++row) {
    const auto x = sample.data.x.row(row);
    const auto exact = xai::shap_exact(pred, x, bg);
    double total = exact.base_value;
    for (double c : exact.contributions) total += c;
    worst_eff = std::max(worst_eff, std::abs(total - exact.prediction));
    if (row < 5) {
      const auto mc = xai::shap_sampled(pred, x, bg, 2000, derive_seed(4, row));
      for (std::size_t j = 0; j < 6; ++j)
        worst_gap = std::max(worst_gap, std::abs(mc.contributions[j] - exact.contributions[j]));
    }
  }
  v.require(worst_eff <= 1e-8, "efficiency gap " + fmt("%.2g", worst_eff) + " on 20 rows");
  v.require(worst_gap <= 0.05, "sampled vs exact max gap " + fmt("%.4f", worst_gap) + " (p=6, 2000 perms)");
  return v;
}

// ---- 5 ----
Verdict importance() {
  Verdict v;
  std::size_t first = 0;
  double worst_sum = 0.0;
  bool dummy_zero = true;
  const std::size_t seeds = 20;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    auto sample = synth::generate(synth::preset("step", 1000, 10, 3000 + s));
    // Column 10 is constant, so no split can use it.
    for (std::size_t i = 0; i < sample.data.n(); ++i) sample.data.x(i, 9) = 0.5;
    const auto lc = local_center(sample.data, trees(100, s));
    const auto cf = fit_causal_forest(sample.data, lc.centered, trees(500, s));
    const auto t = xai::variable_importance(cf.forest, names_for(10));
    first += t.rows[0].feature == 0;
    double total = 0.0;
    for (const auto& row : t.rows) total += row.importance;
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    dummy_zero = dummy_zero && t.importance_of(9) == 0.0;
  }
  v.require(worst_sum <= 1e-9, "sum-to-one error " + fmt("%.2g", worst_sum));
  v.require(first * 100 >= 95 * seeds, "driver ranked first on " + count_of(first, seeds));
  v.require(dummy_zero, "never-split feature exactly 0");
  return v;
}

// ---- 6 ----
Verdict rashomon() {
  Verdict v;
  const std::size_t seeds = 20;
  std::size_t shape_ok = 0, distilled_better = 0;
  double worst_excess = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto spec = synth::preset("linear", 1000, 5, 4000 + s);
    const auto sample = synth::generate(spec);
    const auto lc = local_center(sample.data, trees(200, s));
    const auto g = dr_scores(sample.data, lc.centered, std::nullopt);
    iai::RashomonParams rp;
    rp.sizes = {1, 10, 100, 1000};
    rp.baseline_size = 2000;
    rp.seed = s;
    const auto pts = iai::rashomon_curve(sample.data, lc.centered, g,
                                         synth::draw_covariates(spec, 500, s), rp);
    const double base = pts[0].r_loss - pts[0].relative_r_loss;
    std::size_t inversions = 0;
    bool small = true;
    for (std::size_t k = 1; k < 4; ++k) {
      const double up = pts[k].relative_r_loss - pts[k - 1].relative_r_loss;
      if (up > 0.0) {
        ++inversions;
        worst_excess = std::max(worst_excess, up / std::abs(base));
        small = small && up <= 0.01 * std::abs(base);
      }
    }
    shape_ok += inversions <= 1 && small;
    distilled_better += pts[4].relative_r_loss < pts[0].relative_r_loss;
  }
  v.require(shape_ok == seeds, "non-increasing (<= 1 inversion within 1%) on " +
                                   count_of(shape_ok, seeds) + " (worst inversion " +
                                   fmt("%.4f", worst_excess) + " of baseline)");
  v.require(distilled_better * 10 >= 9 * seeds,
            "distilled < single tree on " + count_of(distilled_better, seeds));
  return v;
}

// ---- 7 ----
Verdict representative() {
  Verdict v;
  const auto sample = synth::generate(synth::preset("step", 1000, 5, 7));
  const auto lc = local_center(sample.data, trees(100));
  const auto cf = fit_causal_forest(sample.data, lc.centered, trees(200));
  const auto rep = iai::representative_tree(cf, sample.data.x, lc.centered);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_index = 0;
  for (std::size_t b = 0; b < cf.forest.size(); ++b) {
    std::vector<double> tau(sample.data.n());
    for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = cf.forest.tree(b).predict(sample.data.x.row(i));
    const double loss = r_loss(tau, lc.centered.y_tilde, lc.centered.w_tilde);
    if (loss < best) {
      best = loss;
      best_index = b;
    }
  }
  v.require(rep.r_loss == best && rep.index == best_index,
            "tree " + std::to_string(rep.index) + " loss equals exhaustive minimum over 200");
  return v;
}

// ---- 8 ----
Verdict blp() {
  Verdict v;
  {
    const Matrix x = synth::draw_covariates(synth::preset("linear", 10, 3, 0), 200, 8);
    std::vector<double> g(200);
    for (std::size_t i = 0; i < 200; ++i) g[i] = 2.0 + 3.0 * x(i, 0);
    const auto r = iai::blp(g, x, names_for(3), {.features = {0}});
    const double err = std::max(std::abs(r.rows[0].coefficient - 2.0), std::abs(r.rows[1].coefficient - 3.0));
    v.require(err <= 1e-8, "noiseless recovery error " + fmt("%.2g", err));
  }
  std::size_t covered = 0;
  double worst_orth = 0.0;
  const std::size_t seeds = 100;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto sample = synth::generate(synth::preset("linear", 2000, 5, 5000 + s));
    const auto lc = local_center(sample.data, trees(200, s));
    const auto g = dr_scores(sample.data, lc.centered, std::nullopt);
    const auto r = iai::blp(g.gamma, sample.data.x, sample.data.feature_names, {.features = {0}});
    const auto& row = r.rows[1];
    covered += std::abs(row.coefficient - 2.0) <= 1.959963984540054 * row.std_error;
    double scale = 0.0;
    for (double e : r.residuals) scale += std::abs(e);
    for (std::size_t k = 0; k < r.design.cols(); ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < r.residuals.size(); ++i) dot += r.design(i, k) * r.residuals[i];
      worst_orth = std::max(worst_orth, std::abs(dot) / scale);
    }
  }
  v.require(covered >= 90 && covered <= 99, "95% CI covers 2 on " + count_of(covered, seeds));
  v.require(worst_orth <= 1e-6, "residual orthogonality " + fmt("%.2g", worst_orth) + " relative");
  return v;
}

// ---- 9 ----
Verdict refutation() {
  Verdict v;
  const auto sample = synth::generate(synth::preset("confounded", 1000, 5, 9));
  PipelineParams pp;
  pp.nuisance.num_trees = 200;
  pp.causal.num_trees = 50;  // the binary ATE does not depend on the causal forest
  const std::size_t seeds = 50;
  std::size_t quiet = 0;
  double worst_profile = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const auto r = diagnostics::placebo_treatment(sample.data, pp, s);
    quiet += std::abs(r.ate.point) < 2.0 * r.ate.std_error;
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& b : r.profile) {
      acc += b.count * b.mean_dr_score;
      n += b.count;
    }
    worst_profile = std::max(worst_profile, std::abs(acc / n - r.ate.point));
  }
  std::vector<std::size_t> id(sample.data.n());
  std::iota(id.begin(), id.end(), 0);
  const auto base = run_pipeline(sample.data, pp);
  const auto same = diagnostics::refute_with_permutation(sample.data, pp,
                                                          diagnostics::RefutationKind::kPlaceboTreatment, id);
  v.require(quiet * 100 >= 85 * seeds, "placebo |ATE| < 2 SE on " + count_of(quiet, seeds));
  v.require(same.ate.point == base.ate.point && same.ate.std_error == base.ate.std_error,
            "identity permutation bit-exact");
  v.require(worst_profile <= 1e-9, "profile aggregation error " + fmt("%.2g", worst_profile));
  return v;
}

// ---- 10 ----
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfaudit");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

std::map<std::string, std::string> csvs(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    m[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return m;
}

Verdict determinism() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "cfaudit_acceptance_determinism";
  fs::remove_all(root);
  bool ok = cli({"synth", "--preset", "confounded", "--n", "1000", "--p", "5", "--out", (root / "syn").string()}) == 0;
  for (const char* t : {"1", "2"}) {
    const auto run = (root / (std::string("run") + t)).string();
    ok = ok && cli({"fit", "--input", (root / "syn" / "data.csv").string(), "--out", run, "--trees",
                    "300", "--nuisance-trees", "100", "--threads", t}) == 0;
    ok = ok && cli({"estimate", "--input", run, "--threads", t}) == 0;
    ok = ok && cli({"importance", "--input", run, "--threads", t}) == 0;
  }
  v.require(ok, "pipeline commands succeeded");
  if (ok) {
    const auto a = csvs(root / "run1"), b = csvs(root / "run2");
    v.require(!a.empty() && a == b, std::to_string(a.size()) + " CSVs byte-identical for --threads 1 vs 2");
  }
  fs::remove_all(root);
  return v;
}

// ---- 11 ----
Verdict data_layer() {
  Verdict v;
  Dataset d;
  d.x = Matrix(4, 1, std::vector<double>{1, 2, std::numeric_limits<double>::quiet_NaN(), 4});
  d.missing_mask = {0, 0, 1, 0};
  d.w = {0, 1, 0, 1};
  d.y = {0, 0, 0, 0};
  d.feature_names = {"x1"};
  const Dataset once = impute_median(d);
  v.require(once.x.column(0) == std::vector<double>{1, 2, 2, 4}, "[1,2,missing,4] -> [1,2,2,4]");
  bool idem = impute_median(once).x == once.x;
  Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50 && idem; ++rep) {
    Dataset r;
    r.x = Matrix(30, 3);
    r.missing_mask.assign(90, 0);
    for (std::size_t k = 0; k < 90; ++k) {
      r.x.data()[k] = u(rng);
      if (k >= 3 && u(rng) < 0.3) {
        r.missing_mask[k] = 1;
        r.x.data()[k] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    r.w.assign(30, 0.0);
    r.y.assign(30, 0.0);
    r.feature_names = names_for(3);
    const Dataset a = impute_median(r);
    idem = impute_median(a).x == a.x;
  }
  v.require(idem, "imputation idempotent on 51 datasets");
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Verdict (*run)();
  };
  const Criterion all[] = {
      {1, "score-formula correctness", score_formula},
      {2, "debiasing", debiasing},
      {3, "CATE recovery", cate_recovery},
      {4, "Shapley axioms", shapley},
      {5, "importance", importance},
      {6, "Rashomon pattern", rashomon},
      {7, "representative tree", representative},
      {8, "BLP", blp},
      {9, "refutation", refutation},
      {10, "determinism", determinism},
      {11, "data layer", data_layer},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s: %s (%.1fs)\n", c.id, v.pass ? "PASS" : "FAIL", c.name,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !v.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(all)) - failures, std::size(all));
  return failures == 0 ? 0 : 1;
}
