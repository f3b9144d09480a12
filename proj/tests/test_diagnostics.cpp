#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfaudit/diagnostics.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/stats.hpp"
#include "cfaudit/synth.hpp"
#include "test_util.hpp"

namespace cfaudit {
namespace {

namespace dx = diagnostics;

PipelineParams quick_params(std::uint64_t seed = 42) {
  PipelineParams pp;
  pp.nuisance.num_trees = 100;
  pp.causal.num_trees = 100;
  pp.seed = seed;
  return pp;
}

CenteredData binary_centered(std::vector<double> e_raw) {
  CenteredData c;
  c.treatment_type = TreatmentType::kBinary;
  c.e_hat_raw = e_raw;
  c.e_hat = e_raw;
  for (double& v : c.e_hat) v = std::clamp(v, c.clamp.lo, c.clamp.hi);
  c.w_tilde.assign(e_raw.size(), 0.0);
  c.y_tilde.assign(e_raw.size(), 0.0);
  return c;
}

TEST(Permutation, ValidDeterministicAndSeedDependent) {
  const auto a = dx::random_permutation(500, 7);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 500; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(a, dx::random_permutation(500, 7));
  EXPECT_NE(a, dx::random_permutation(500, 8));
  EXPECT_EQ(dx::random_permutation(1, 99), std::vector<std::size_t>{0});
  EXPECT_TRUE(dx::random_permutation(0, 1).empty());
}

TEST(Permutation, RoughlyUniformFirstPosition) {
  std::vector<int> hits(5, 0);
  for (std::uint64_t s = 0; s < 5000; ++s) ++hits[dx::random_permutation(5, s)[0]];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(RefutationKind, Names) {
  EXPECT_EQ(dx::parse_refutation("placebo"), dx::RefutationKind::kPlaceboTreatment);
  EXPECT_EQ(dx::parse_refutation("dummy_outcome"), dx::RefutationKind::kDummyOutcome);
  EXPECT_EQ(dx::refutation_name(dx::RefutationKind::kDummyOutcome), "dummy_outcome");
  EXPECT_THROW(dx::parse_refutation("random_cause"), UsageError);
}

TEST(DecileProfile, DistinctValuesGiveTenEqualBins) {
  std::vector<double> actual(100), scores(100);
  std::iota(actual.begin(), actual.end(), 1.0);
  for (std::size_t i = 0; i < 100; ++i) scores[i] = 2.0 * actual[i];
  const auto bins = dx::decile_profile(actual, scores);
  ASSERT_EQ(bins.size(), 10u);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_EQ(bins[k].count, 10u);
    EXPECT_EQ(bins[k].lo, 10.0 * k + 1);
    EXPECT_EQ(bins[k].hi, 10.0 * k + 10);
    EXPECT_DOUBLE_EQ(bins[k].mean_dr_score, 2.0 * (10.0 * k + 5.5));
  }
  EXPECT_EQ(bins[0].label, "[1, 10]");
}

TEST(DecileProfile, BinaryVariableGivesTwoBins) {
  const std::vector<double> w = {0, 1, 1, 0, 1, 0, 0, 0};
  const std::vector<double> g = {1, 5, 7, 3, 9, -1, 0, 2};
  const auto bins = dx::decile_profile(w, g);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].count, 5u);
  EXPECT_DOUBLE_EQ(bins[0].mean_dr_score, 1.0);
  EXPECT_EQ(bins[1].count, 3u);
  EXPECT_DOUBLE_EQ(bins[1].mean_dr_score, 7.0);
}

TEST(DecileProfile, CountsAndWeightedMeansAggregate) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto actual = testing::uniform_vector(257, seed, 0, 3);
    for (double& v : actual) v = std::round(v * 2.0) / 2.0;  // heavy ties
    const auto scores = testing::uniform_vector(257, seed + 50, -4, 4);
    const auto bins = dx::decile_profile(actual, scores);
    std::size_t n = 0;
    double acc = 0.0;
    for (const auto& b : bins) {
      n += b.count;
      acc += b.count * b.mean_dr_score;
    }
    EXPECT_EQ(n, 257u);
    EXPECT_NEAR(acc / 257.0, stats::mean(scores), 1e-12);
  }
  EXPECT_THROW(dx::decile_profile(std::vector<double>{}, std::vector<double>{}), DataError);
}

class RefutationTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sample_ = new synth::SynthSample(synth::generate(synth::preset("confounded", 1000, 3, 5)));
    original_ = new PipelineResult(run_pipeline(sample_->data, quick_params()));
  }
  static void TearDownTestSuite() {
    delete sample_;
    delete original_;
  }
  static inline synth::SynthSample* sample_ = nullptr;
  static inline PipelineResult* original_ = nullptr;
};

TEST_F(RefutationTest, IdentityPermutationReproducesAteBitExactly) {
  std::vector<std::size_t> id(sample_->data.n());
  std::iota(id.begin(), id.end(), 0);
  for (auto kind : {dx::RefutationKind::kPlaceboTreatment, dx::RefutationKind::kDummyOutcome}) {
    const auto r = dx::refute_with_permutation(sample_->data, quick_params(), kind, id);
    EXPECT_EQ(r.ate.point, original_->ate.point);
    EXPECT_EQ(r.ate.std_error, original_->ate.std_error);
  }
}

TEST_F(RefutationTest, PlaceboProfileAggregatesToAte) {
  const auto r = dx::placebo_treatment(sample_->data, quick_params(), 11);
  EXPECT_EQ(r.kind, dx::RefutationKind::kPlaceboTreatment);
  EXPECT_EQ(r.seed, 11u);
  std::size_t n = 0;
  double acc = 0.0;
  for (const auto& b : r.profile) {
    n += b.count;
    acc += b.count * b.mean_dr_score;
  }
  EXPECT_EQ(n, sample_->data.n());
  EXPECT_NEAR(acc / n, r.ate.point, 1e-9);
  EXPECT_EQ(r.profile.size(), 2u);  // binned by the actual binary treatment
  EXPECT_LT(std::abs(r.ate.point), 2.0 * r.ate.std_error);
}

TEST_F(RefutationTest, DummyOutcomeNearZeroAndDeterministic) {
  const auto a = dx::dummy_outcome(sample_->data, quick_params(), 12);
  const auto b = dx::refute(sample_->data, quick_params(), dx::RefutationKind::kDummyOutcome, 12);
  EXPECT_EQ(a.ate.point, b.ate.point);
  EXPECT_LT(std::abs(a.ate.point), 3.0 * a.ate.std_error);
  std::size_t n = 0;
  for (const auto& bin : a.profile) n += bin.count;
  EXPECT_EQ(n, sample_->data.n());
  EXPECT_GT(a.profile.size(), 5u);  // deciles of a continuous outcome
}

TEST_F(RefutationTest, WrongPermutationLength) {
  EXPECT_THROW(dx::refute_with_permutation(sample_->data, quick_params(),
                                           dx::RefutationKind::kDummyOutcome, std::vector<std::size_t>{0}),
               DataError);
}

TEST(Refutation, ConstantOutcomeGivesZeroStandardError) {
  auto s = synth::generate(synth::preset("randomized", 400, 2, 6));
  s.data.y.assign(400, 3.0);
  const auto r = dx::dummy_outcome(s.data, quick_params(), 1);
  EXPECT_EQ(r.ate.std_error, 0.0);
  EXPECT_EQ(r.ate.point, 0.0);
  ASSERT_EQ(r.profile.size(), 1u);
  EXPECT_EQ(r.profile[0].count, 400u);
}

TEST(Overlap, InteriorPropensitiesPass) {
  const auto e = testing::uniform_vector(200, 1, 0.3, 0.7);
  const auto rep = dx::overlap_check(binary_centered(e));
  EXPECT_TRUE(rep.binary);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.clamped_count, 0u);
  EXPECT_TRUE(rep.warnings.empty());
  EXPECT_EQ(rep.min, *std::min_element(e.begin(), e.end()));
  ASSERT_EQ(rep.deciles.size(), 9u);
  EXPECT_EQ(rep.deciles[4], stats::quantile(e, 0.5));
  ASSERT_EQ(rep.histogram.size(), 20u);
  std::size_t total = 0;
  for (const auto& b : rep.histogram) {
    total += b.count;
    if (b.hi <= 0.3 - 1e-12 || b.lo >= 0.7 + 1e-12) EXPECT_EQ(b.count, 0u);
  }
  EXPECT_EQ(total, 200u);
}

TEST(Overlap, ExtremeUnitIsClampedAndWarned) {
  auto e = testing::uniform_vector(50, 2, 0.3, 0.7);
  e[17] = 0.005;
  const auto rep = dx::overlap_check(binary_centered(e));
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.clamped_count, 1u);
  EXPECT_EQ(rep.clamped_units, std::vector<std::uint32_t>{17});
  EXPECT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(rep.min, 0.005);
  EXPECT_EQ(rep.histogram[0].count, 1u);
}

TEST(Overlap, RandomizedDesignDecilesNearHalf) {
  const auto s = synth::generate(synth::preset("randomized", 2000, 3, 7));
  ForestParams p;
  p.num_trees = 200;
  const auto lc = local_center(s.data, p);
  const auto rep = dx::overlap_check(lc.centered);
  for (double q : rep.deciles) EXPECT_NEAR(q, 0.5, 0.1);
  EXPECT_TRUE(rep.pass);
}

TEST(Overlap, ContinuousTreatmentReportsVarianceProfile) {
  const auto s = synth::generate(synth::preset("continuous", 600, 2, 8));
  ForestParams p;
  p.num_trees = 50;
  const auto lc = local_center(s.data, p);
  const auto rep = dx::overlap_check(lc.centered);
  EXPECT_FALSE(rep.binary);
  EXPECT_FALSE(rep.pass);
  EXPECT_FALSE(rep.warnings.empty());
  EXPECT_TRUE(rep.histogram.empty());
  std::size_t n = 0;
  for (const auto& b : rep.variance_profile) {
    n += b.count;
    EXPECT_GT(b.w_tilde_variance, 0.0);
  }
  EXPECT_EQ(n, 600u);
}

}  // namespace
}  // namespace cfaudit
