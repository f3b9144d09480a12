#include "cfaudit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cfaudit/csv.hpp"
#include "cfaudit/error.hpp"
#include "cfaudit/rng.hpp"
#include "cfaudit/stats.hpp"

namespace cfaudit::diagnostics {

std::string_view refutation_name(RefutationKind k) {
  return k == RefutationKind::kPlaceboTreatment ? "placebo_treatment" : "dummy_outcome";
}

RefutationKind parse_refutation(std::string_view s) {
  if (s == "placebo" || s == "placebo_treatment") return RefutationKind::kPlaceboTreatment;
  if (s == "dummy" || s == "dummy_outcome") return RefutationKind::kDummyOutcome;
  throw UsageError("unknown refutation test '" + std::string(s) + "' (placebo|dummy)");
}

std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, streams::kPermutation));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  return perm;
}

namespace {

// Deduplicated decile cut points of v.
std::vector<double> decile_cuts(std::span<const double> v) {
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (int k = 1; k <= 9; ++k) {
    const double q = stats::quantile_sorted(sorted, k / 10.0);
    if (cuts.empty() || q > cuts.back()) cuts.push_back(q);
  }
  return cuts;
}

std::size_t bin_of(const std::vector<double>& cuts, double v) {
  return static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
}

}  // namespace

std::vector<ProfileBin> decile_profile(std::span<const double> actual,
                                       std::span<const double> scores) {
  if (actual.size() != scores.size() || actual.empty()) {
    throw DataError("decile_profile: need equal, non-empty inputs");
  }
  const auto cuts = decile_cuts(actual);
  std::vector<ProfileBin> bins(cuts.size() + 1);
  std::vector<double> sums(bins.size(), 0.0);
  for (auto& b : bins) {
    b.lo = std::numeric_limits<double>::infinity();
    b.hi = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    auto& b = bins[bin_of(cuts, actual[i])];
    ++b.count;
    sums[&b - bins.data()] += scores[i];
    b.lo = std::min(b.lo, actual[i]);
    b.hi = std::max(b.hi, actual[i]);
  }
  std::vector<ProfileBin> out;
  for (std::size_t k = 0; k < bins.size(); ++k) {
    if (bins[k].count == 0) continue;
    ProfileBin b = bins[k];
    b.mean_dr_score = sums[k] / static_cast<double>(b.count);
    b.label = "[" + format_double(b.lo) + ", " + format_double(b.hi) + "]";
    out.push_back(std::move(b));
  }
  return out;
}

RefutationResult refute_with_permutation(const Dataset& d, const PipelineParams& params,
                                         RefutationKind kind, std::span<const std::size_t> perm) {
  if (perm.size() != d.n()) throw DataError("refutation permutation has the wrong length");
  const bool placebo = kind == RefutationKind::kPlaceboTreatment;
  const std::vector<double>& original = placebo ? d.w : d.y;
  std::vector<double> shuffled(d.n());
  for (std::size_t i = 0; i < d.n(); ++i) shuffled[i] = original[perm[i]];
  const Dataset broken = placebo ? d.with_treatment(std::move(shuffled))
                                 : d.with_outcome(std::move(shuffled));
  const PipelineResult r = run_pipeline(broken, params);

  RefutationResult out;
  out.kind = kind;
  out.ate = r.ate;
  out.seed = params.seed;
  out.profile = decile_profile(original, r.scores.gamma);
  return out;
}

RefutationResult refute(const Dataset& d, const PipelineParams& params, RefutationKind kind,
                        std::uint64_t seed) {
  const auto perm = random_permutation(d.n(), seed);
  RefutationResult r = refute_with_permutation(d, params, kind, perm);
  r.seed = seed;
  return r;
}

RefutationResult placebo_treatment(const Dataset& d, const PipelineParams& params,
                                   std::uint64_t seed) {
  return refute(d, params, RefutationKind::kPlaceboTreatment, seed);
}

RefutationResult dummy_outcome(const Dataset& d, const PipelineParams& params, std::uint64_t seed) {
  return refute(d, params, RefutationKind::kDummyOutcome, seed);
}

OverlapReport overlap_check(const CenteredData& c) {
  OverlapReport rep;
  const auto& e = c.e_hat_raw;
  if (e.empty()) throw DataError("overlap_check: no propensity predictions");
  rep.binary = c.treatment_type == TreatmentType::kBinary;
  std::vector<double> sorted(e.begin(), e.end());
  std::sort(sorted.begin(), sorted.end());
  rep.min = sorted.front();
  rep.max = sorted.back();
  for (int k = 1; k <= 9; ++k) rep.deciles.push_back(stats::quantile_sorted(sorted, k / 10.0));

  if (!rep.binary) {
    rep.pass = false;
    rep.warnings.push_back(
        "continuous treatment: propensity overlap does not apply; reporting W~ variance by "
        "deciles of the treatment prediction");
    const auto cuts = decile_cuts(e);
    std::vector<std::vector<std::size_t>> groups(cuts.size() + 1);
    for (std::size_t i = 0; i < e.size(); ++i) groups[bin_of(cuts, e[i])].push_back(i);
    for (const auto& g : groups) {
      if (g.empty()) continue;
      VarianceBin vb;
      vb.lo = std::numeric_limits<double>::infinity();
      vb.hi = -vb.lo;
      std::vector<double> wt;
      for (std::size_t i : g) {
        vb.lo = std::min(vb.lo, e[i]);
        vb.hi = std::max(vb.hi, e[i]);
        wt.push_back(c.w_tilde[i]);
      }
      vb.count = g.size();
      const double sd = stats::sample_sd(wt);
      vb.w_tilde_variance = sd * sd;
      rep.variance_profile.push_back(vb);
    }
    return rep;
  }

  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i] < c.clamp.lo || e[i] > c.clamp.hi) {
      rep.clamped_units.push_back(static_cast<std::uint32_t>(i));
    }
  }
  rep.clamped_count = rep.clamped_units.size();
  rep.pass = rep.clamped_count == 0;
  if (!rep.pass) {
    rep.warnings.push_back(std::to_string(rep.clamped_count) +
                           " unit(s) had propensity outside [" + format_double(c.clamp.lo) +
                           ", " + format_double(c.clamp.hi) + "] and were clamped");
  }
  constexpr int kBins = 20;
  for (int k = 0; k < kBins; ++k) rep.histogram.push_back({k * 0.05, (k + 1) * 0.05, 0});
  for (double v : e) {
    const int k = std::clamp(static_cast<int>(std::floor(v / 0.05)), 0, kBins - 1);
    ++rep.histogram[static_cast<std::size_t>(k)].count;
  }
  return rep;
}

}  // namespace cfaudit::diagnostics
