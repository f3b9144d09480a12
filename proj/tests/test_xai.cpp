#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cfaudit/causal.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/stats.hpp"
#include "cfaudit/synth.hpp"
#include "cfaudit/xai.hpp"
#include "test_util.hpp"

namespace cfaudit {
namespace {

using testing::leaf_node;
using testing::split_node;

std::vector<std::string> names_for(std::size_t p) {
  std::vector<std::string> v;
  for (std::size_t j = 0; j < p; ++j) v.push_back("x" + std::to_string(j + 1));
  return v;
}

// Root splits `root`; both children split `child`.
Tree two_level_tree(std::int32_t root, std::int32_t child) {
  Tree t;
  t.nodes = {split_node(1, root, 0.5, 1, 2),   split_node(2, child, 0.5, 3, 4),
             split_node(2, child, 0.5, 5, 6),  leaf_node(3, 0, 0, 0),
             leaf_node(3, 0, 0, 0),            leaf_node(3, 0, 0, 0),
             leaf_node(3, 0, 0, 0)};
  return t;
}

Tree one_split_tree(std::int32_t feature) {
  Tree t;
  t.nodes = {split_node(1, feature, 0.5, 1, 2), leaf_node(2, 0, 0, 0), leaf_node(2, 0, 0, 0)};
  return t;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

struct Fitted {
  synth::SynthSample sample;
  PipelineResult result;
};

Fitted fit(const std::string& preset, std::size_t n, std::size_t p, std::uint64_t seed,
           std::size_t causal_trees = 200) {
  Fitted f{synth::generate(synth::preset(preset, n, p, seed)), {}};
  PipelineParams pp;
  pp.nuisance.num_trees = 100;
  pp.causal.num_trees = causal_trees;
  pp.seed = seed;
  f.result = run_pipeline(f.sample.data, pp);
  return f;
}

// ---- importance ----

TEST(Importance, HandComputedTwoLevelTree) {
  const Forest f(ForestParams{}, SplitRule::kRLoss, 1, 2, {two_level_tree(0, 1)});
  const auto t = xai::variable_importance(f, names_for(2));
  EXPECT_NEAR(t.importance_of(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(t.importance_of(1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(t.rows[0].rank, 1u);
  EXPECT_EQ(t.rows[0].name, "x1");
  EXPECT_FALSE(t.degenerate);
}

TEST(Importance, SharesAreAveragedAcrossTrees) {
  // Depth 1 shares: f0 1/2, f2 1/2. Depth 2: f1 1.
  const Forest f(ForestParams{}, SplitRule::kRLoss, 1, 3,
                 {two_level_tree(0, 1), one_split_tree(2)});
  const auto t = xai::variable_importance(f, names_for(3));
  EXPECT_NEAR(t.importance_of(0), 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(t.importance_of(1), 0.5 / 1.5, 1e-15);
  EXPECT_NEAR(t.importance_of(2), 0.5 / 1.5, 1e-15);
  // Ties broken by feature index.
  EXPECT_EQ(t.rows[0].feature, 0u);
  EXPECT_EQ(t.rows[1].feature, 1u);
  EXPECT_EQ(t.rows[2].feature, 2u);
}

TEST(Importance, DepthCutoffAndDecay) {
  const Forest f(ForestParams{}, SplitRule::kRLoss, 1, 2, {two_level_tree(0, 1)});
  const auto shallow = xai::variable_importance(f, names_for(2), 0.5, 1);
  EXPECT_EQ(shallow.importance_of(0), 1.0);
  EXPECT_EQ(shallow.importance_of(1), 0.0);
  const auto flat = xai::variable_importance(f, names_for(2), 1.0, 4);
  EXPECT_DOUBLE_EQ(flat.importance_of(0), 0.5);
  EXPECT_THROW(xai::variable_importance(f, names_for(2), 0.0, 4), UsageError);
  EXPECT_THROW(xai::variable_importance(f, names_for(2), 0.5, 0), UsageError);
  EXPECT_THROW(xai::variable_importance(f, names_for(3)), DataError);
}

TEST(Importance, SingleFeatureForest) {
  const Forest f(ForestParams{}, SplitRule::kRLoss, 1, 4,
                 {one_split_tree(2), two_level_tree(2, 2)});
  const auto t = xai::variable_importance(f, names_for(4));
  EXPECT_EQ(t.importance_of(2), 1.0);
  for (std::size_t j : {0u, 1u, 3u}) EXPECT_EQ(t.importance_of(j), 0.0);
}

TEST(Importance, NoSplitsIsDegenerate) {
  const Forest f(ForestParams{}, SplitRule::kRLoss, 2, 2, {testing::single_leaf_tree({0, 1})});
  const auto t = xai::variable_importance(f, names_for(2));
  EXPECT_TRUE(t.degenerate);
  for (const auto& r : t.rows) EXPECT_EQ(r.importance, 0.0);
}

TEST(Importance, FittedForestSumsToOneAndUnusedFeatureIsZero) {
  auto s = synth::generate(synth::preset("step", 600, 4, 3));
  // A constant column can never be split on.
  for (std::size_t i = 0; i < 600; ++i) s.data.x(i, 3) = 0.25;
  const auto lc = local_center(s.data, ForestParams{.num_trees = 50});
  const auto cf = fit_causal_forest(s.data, lc.centered, ForestParams{.num_trees = 100});
  const auto t = xai::variable_importance(cf.forest, names_for(4));
  double total = 0.0;
  for (const auto& r : t.rows) {
    EXPECT_GE(r.importance, 0.0);
    total += r.importance;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_EQ(t.importance_of(3), 0.0);
  for (std::size_t k = 1; k < t.rows.size(); ++k)
    EXPECT_GE(t.rows[k - 1].importance, t.rows[k].importance);
}

TEST(Importance, InvariantToPositiveColumnRescaling) {
  const auto s = synth::generate(synth::preset("linear", 500, 3, 4));
  const auto yt = testing::uniform_vector(500, 5);
  const auto wt = testing::uniform_vector(500, 6);
  ForestParams p;
  p.num_trees = 40;
  const Forest a = fit_forest(s.data.x, rloss_targets(yt, wt), SplitRule::kRLoss, p);
  Matrix scaled = s.data.x;
  for (std::size_t i = 0; i < 500; ++i) scaled(i, 1) *= 4.0;
  const Forest b = fit_forest(scaled, rloss_targets(yt, wt), SplitRule::kRLoss, p);
  const auto ta = xai::variable_importance(a, names_for(3));
  const auto tb = xai::variable_importance(b, names_for(3));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(ta.rows[k].feature, tb.rows[k].feature);
    EXPECT_EQ(ta.rows[k].importance, tb.rows[k].importance);
  }
}

TEST(Importance, DriverRankedFirst) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = fit("linear", 800, 6, seed);
    const auto t = xai::variable_importance(f.result.forest.forest, names_for(6));
    EXPECT_EQ(t.rows[0].feature, 0u) << "seed " << seed;
  }
}

// ---- Shapley values on closed-form games ----

TEST(ShapExact, AdditiveFunction) {
  const xai::FunctionGame g([](std::span<const double> x) { return x[0] + x[1]; },
                            {0.7, -1.2}, Matrix(1, 2));
  const auto e = xai::shap_exact(g);
  EXPECT_EQ(e.base_value, 0.0);
  EXPECT_NEAR(e.contributions[0], 0.7, 1e-15);
  EXPECT_NEAR(e.contributions[1], -1.2, 1e-15);
  EXPECT_TRUE(e.exact);
}

TEST(ShapExact, NullPlayerWhenQueryEqualsBackground) {
  const xai::FunctionGame g([](std::span<const double> x) { return std::exp(x[0]) * x[1] - x[2]; },
                            {0.3, 2.0, -1.0}, Matrix(1, 3, std::vector<double>{0.3, 2.0, -1.0}));
  const auto e = xai::shap_exact(g);
  for (double c : e.contributions) EXPECT_EQ(c, 0.0);
}

TEST(ShapExact, SymmetricProduct) {
  const xai::FunctionGame g([](std::span<const double> x) { return x[0] * x[1]; }, {1.0, 1.0},
                            Matrix(1, 2));
  const auto e = xai::shap_exact(g);
  EXPECT_DOUBLE_EQ(e.contributions[0], 0.5);
  EXPECT_DOUBLE_EQ(e.contributions[1], 0.5);
}

TEST(ShapExact, SwappingExchangeableFeaturesSwapsAttributions) {
  auto fn = [](std::span<const double> x) { return x[0] * x[1] + std::sin(x[2]) * x[0]; };
  auto sw = [&](std::span<const double> x) {
    const double y[3] = {x[1], x[0], x[2]};
    return fn(y);
  };
  Matrix bg(3, 3, testing::uniform_vector(9, 8));
  Matrix bg_sw = bg;
  for (std::size_t r = 0; r < 3; ++r) std::swap(bg_sw(r, 0), bg_sw(r, 1));
  const auto a = xai::shap_exact(xai::FunctionGame(fn, {0.4, 0.9, 1.3}, bg));
  const auto b = xai::shap_exact(xai::FunctionGame(sw, {0.9, 0.4, 1.3}, bg_sw));
  EXPECT_NEAR(a.contributions[0], b.contributions[1], 1e-14);
  EXPECT_NEAR(a.contributions[1], b.contributions[0], 1e-14);
  EXPECT_NEAR(a.contributions[2], b.contributions[2], 1e-14);
}

TEST(ShapExact, EfficiencyOnRandomGame) {
  auto fn = [](std::span<const double> x) {
    return x[0] * x[1] - x[2] * x[2] + std::cos(x[3] + x[4]) + 0.3 * x[5];
  };
  const xai::FunctionGame g(fn, testing::uniform_vector(6, 9), Matrix(5, 6, testing::uniform_vector(30, 10)));
  const auto e = xai::shap_exact(g);
  EXPECT_NEAR(e.base_value + sum(e.contributions), e.prediction, 1e-12);
  EXPECT_EQ(e.prediction, g.value((1u << 6) - 1));
  EXPECT_EQ(e.base_value, g.value(0));
}

TEST(ShapExact, TooManyPlayersRejected) {
  const xai::FunctionGame g([](std::span<const double>) { return 0.0; },
                            std::vector<double>(16, 0.0), Matrix(1, 16));
  EXPECT_THROW(xai::shap_exact(g), UsageError);
}

TEST(ShapSampled, ConvergesToExactAtSixFeatures) {
  auto fn = [](std::span<const double> x) {
    return x[0] * x[1] + std::sin(3.0 * x[2]) + x[3] * x[3] - x[4] * x[5];
  };
  const xai::FunctionGame g(fn, testing::uniform_vector(6, 11),
                            Matrix(10, 6, testing::uniform_vector(60, 12)));
  const auto exact = xai::shap_exact(g);
  const auto mc = xai::shap_sampled(g, 2000, 7);
  EXPECT_FALSE(mc.exact);
  for (std::size_t j = 0; j < 6; ++j) {
    EXPECT_NEAR(mc.contributions[j], exact.contributions[j], 0.05);
    EXPECT_GE(mc.std_errors[j], 0.0);
  }
  EXPECT_NEAR(mc.base_value + sum(mc.contributions), mc.prediction, 1e-10);
}

TEST(ShapSampled, DeterministicAndSeedSensitive) {
  auto fn = [](std::span<const double> x) { return x[0] * x[1] * x[2] + x[3]; };
  const xai::FunctionGame g(fn, {0.5, 1.5, -1.0, 2.0}, Matrix(4, 4, testing::uniform_vector(16, 13)));
  const auto a = xai::shap_sampled(g, 50, 3);
  const auto b = xai::shap_sampled(g, 50, 3);
  const auto c = xai::shap_sampled(g, 50, 4);
  EXPECT_EQ(a.contributions, b.contributions);
  EXPECT_EQ(a.std_errors, b.std_errors);
  EXPECT_NE(a.contributions, c.contributions);
  EXPECT_THROW(xai::shap_sampled(g, 0, 1), UsageError);
}

TEST(ShapSampled, ConstantFunction) {
  const xai::FunctionGame g([](std::span<const double>) { return 4.5; }, {1, 2, 3},
                            Matrix(2, 3, testing::uniform_vector(6, 14)));
  const auto e = xai::shap_sampled(g, 25, 1);
  EXPECT_EQ(e.base_value, 4.5);
  for (double c : e.contributions) EXPECT_EQ(c, 0.0);
}

// ---- Shapley values on the fitted estimator ----

TEST(ForestGame, MatchesBruteForceCoalitionValues) {
  const auto f = fit("linear", 400, 4, 21, 60);
  const CatePredictor pred(f.result.forest, f.result.scores);
  const Matrix bg = xai::select_background(f.sample.data.x, 12, 1);
  const auto xq = f.sample.data.x.row(7);
  const xai::ForestGame fast(pred, xq, bg);
  const xai::FunctionGame slow([&](std::span<const double> r) { return pred.predict(r); },
                               std::vector<double>(xq.begin(), xq.end()), bg);
  for (std::uint64_t mask = 0; mask < 16; ++mask)
    EXPECT_NEAR(fast.value(mask), slow.value(mask), 1e-10) << "mask " << mask;
}

TEST(ForestGame, EfficiencyAgainstPrediction) {
  const auto f = fit("linear", 400, 5, 22, 80);
  const CatePredictor pred(f.result.forest, f.result.scores);
  const Matrix bg = xai::select_background(f.sample.data.x, 50, 2);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto e = xai::shap_exact(pred, f.sample.data.x.row(r), bg);
    EXPECT_NEAR(e.base_value + sum(e.contributions), e.prediction, 1e-8);
    EXPECT_NEAR(e.prediction, pred.predict(f.sample.data.x.row(r)), 1e-10);
    double mean_bg = 0.0;
    for (double v : pred.predict(bg)) mean_bg += v;
    EXPECT_NEAR(e.base_value, mean_bg / bg.rows(), 1e-10);
  }
}

TEST(Shap, ContributionTracksEffectDriver) {
  const auto f = fit("linear", 1000, 3, 23, 300);
  const CatePredictor pred(f.result.forest, f.result.scores);
  const Matrix bg = xai::select_background(f.sample.data.x, 100, 3);
  std::vector<std::size_t> ids(40);
  std::iota(ids.begin(), ids.end(), 0);
  const Matrix rows = f.sample.data.x.select_rows(ids);
  std::vector<xai::ShapExplanation> ex;
  for (std::size_t r = 0; r < rows.rows(); ++r) ex.push_back(xai::shap_exact(pred, rows.row(r), bg));
  const auto table = xai::aggregate_shap(ex, rows, names_for(3));
  ASSERT_EQ(table.features[0].feature, 0u);
  std::vector<double> v, c;
  for (const auto& [value, contribution] : table.features[0].points) {
    v.push_back(value);
    c.push_back(contribution);
  }
  EXPECT_GT(stats::spearman(v, c), 0.5);
}

// ---- emission helpers ----

TEST(AggregateShap, SingletonReproducesContributions) {
  xai::ShapExplanation e;
  e.contributions = {0.1, -0.4, 0.0};
  const Matrix x(1, 3, std::vector<double>{5, 6, 7});
  const auto t = xai::aggregate_shap({e}, x, names_for(3));
  ASSERT_EQ(t.features.size(), 3u);
  EXPECT_EQ(t.features[0].name, "x2");
  EXPECT_EQ(t.features[0].points[0], std::make_pair(6.0, -0.4));
  EXPECT_EQ(t.features[1].points[0], std::make_pair(5.0, 0.1));
  EXPECT_EQ(t.features[2].name, "x3");  // all-zero feature last
  EXPECT_EQ(t.features[2].mean_abs, 0.0);
}

TEST(AggregateShap, TopKAndMismatch) {
  xai::ShapExplanation e;
  e.contributions = {1, 2, 3, 4};
  const Matrix x(1, 4);
  EXPECT_EQ(xai::aggregate_shap({e}, x, names_for(4), 2).features.size(), 2u);
  EXPECT_THROW(xai::aggregate_shap({e, e}, x, names_for(4)), DataError);
}

TEST(Waterfall, CollapsesTailIntoOtherBar) {
  xai::ShapExplanation e;
  e.contributions = {0.1, -0.5, 0.3, 0.05, -0.02};
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const auto bars = xai::waterfall(e, x, names_for(5), 2);
  ASSERT_EQ(bars.size(), 3u);
  EXPECT_EQ(bars[0].label, "x2");
  EXPECT_EQ(bars[0].feature_value, 2.0);
  EXPECT_EQ(bars[1].label, "x3");
  EXPECT_EQ(bars[2].label, "other (3 features)");
  EXPECT_TRUE(std::isnan(bars[2].feature_value));
  EXPECT_NEAR(bars[2].contribution, 0.13, 1e-15);
  EXPECT_EQ(xai::waterfall(e, x, names_for(5)).size(), 5u);
}

TEST(Background, SubsetOfRowsDeterministic) {
  const Matrix x(50, 2, testing::uniform_vector(100, 15));
  EXPECT_EQ(xai::select_background(x, 60, 1), x);
  const Matrix a = xai::select_background(x, 10, 1);
  EXPECT_EQ(a.rows(), 10u);
  EXPECT_EQ(a, xai::select_background(x, 10, 1));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    bool found = false;
    for (std::size_t i = 0; i < x.rows() && !found; ++i)
      found = x(i, 0) == a(r, 0) && x(i, 1) == a(r, 1);
    EXPECT_TRUE(found);
  }
  EXPECT_THROW(xai::select_background(x, 0, 1), UsageError);
}

}  // namespace
}  // namespace cfaudit
