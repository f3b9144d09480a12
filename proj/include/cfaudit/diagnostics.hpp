#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cfaudit/causal.hpp"

namespace cfaudit::diagnostics {

enum class RefutationKind { kPlaceboTreatment, kDummyOutcome };

std::string_view refutation_name(RefutationKind k);
RefutationKind parse_refutation(std::string_view s);  // "placebo" | "dummy"

struct ProfileBin {
  std::string label;
  double lo = 0.0;  // observed range of the actual variable inside the bin
  double hi = 0.0;
  double mean_dr_score = 0.0;
  std::size_t count = 0;
};

struct RefutationResult {
  RefutationKind kind = RefutationKind::kPlaceboTreatment;
  CateEstimate ate;
  std::vector<ProfileBin> profile;
  std::uint64_t seed = 0;
};

// Uniform random permutation of 0..n-1 from derive_seed(seed, permutation stream).
std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed);

// Bins `actual` at its deduplicated deciles (bins are (c_k, c_k+1], empty ones
// dropped) and averages `scores` within each bin.
std::vector<ProfileBin> decile_profile(std::span<const double> actual,
                                       std::span<const double> scores);

// Shuffles W (placebo) or Y (dummy) with the given permutation, reruns the
// whole pipeline and profiles the new scores against the unshuffled variable.
RefutationResult refute_with_permutation(const Dataset& d, const PipelineParams& params,
                                         RefutationKind kind, std::span<const std::size_t> perm);

RefutationResult placebo_treatment(const Dataset& d, const PipelineParams& params,
                                   std::uint64_t seed);
RefutationResult dummy_outcome(const Dataset& d, const PipelineParams& params, std::uint64_t seed);
RefutationResult refute(const Dataset& d, const PipelineParams& params, RefutationKind kind,
                        std::uint64_t seed);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct VarianceBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double w_tilde_variance = 0.0;
};

struct OverlapReport {
  bool binary = true;
  bool pass = true;  // no unit needed clamping
  double min = 0.0;
  double max = 0.0;
  std::vector<double> deciles;  // 10%, ..., 90% of raw e_hat
  std::size_t clamped_count = 0;
  std::vector<std::uint32_t> clamped_units;
  std::vector<HistogramBin> histogram;  // width 0.05 over [0, 1]
  // Continuous treatment only: variance of W~ within deciles of e_hat.
  std::vector<VarianceBin> variance_profile;
  std::vector<std::string> warnings;
};

OverlapReport overlap_check(const CenteredData& c);

}  // namespace cfaudit::diagnostics
