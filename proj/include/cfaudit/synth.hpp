#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfaudit/data.hpp"

namespace cfaudit::synth {

// f(x) = intercept + slope * x[feature]
struct LinearFunction {
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t feature = 0;

  double operator()(std::span<const double> x) const { return intercept + slope * x[feature]; }
};

enum class EffectKind { kConstant, kLinear, kStep, kInteraction };

std::string_view effect_kind_name(EffectKind k);
// Throws UsageError on an unknown id.
EffectKind parse_effect_kind(std::string_view s);

// constant:    base
// linear:      base + scale * x[feature]
// step:        base + scale * 1[x[feature] > threshold]
// interaction: base + scale * x[feature] * x[feature2]
struct EffectFunction {
  EffectKind kind = EffectKind::kConstant;
  double base = 1.0;
  double scale = 0.0;
  std::size_t feature = 0;
  std::size_t feature2 = 1;
  double threshold = 0.5;

  double operator()(std::span<const double> x) const;
};

struct DgpSpec {
  std::size_t n = 1000;
  std::size_t p = 5;
  LinearFunction propensity{0.5, 0.0, 0};  // binary: P(W=1|x); continuous: E[W|x]
  LinearFunction baseline{0.0, 0.0, 0};    // m(x)
  EffectFunction effect;                   // tau(x)
  double noise_sd = 1.0;
  TreatmentType treatment = TreatmentType::kBinary;
  double treatment_noise = 0.5;  // continuous: W = e(x) + U(-h, h)
  std::uint64_t seed = 1;

  // Throws UsageError when the spec is invalid.
  void validate() const;
};

struct SynthSample {
  Dataset data;
  std::vector<double> tau;         // tau(x_i)
  std::vector<double> propensity;  // e(x_i)
  std::vector<double> y0, y1;      // potential outcomes (binary treatment)
  double true_ate = 0.0;           // sample mean of tau(x_i)
};

// X ~ U[0,1]^p; binary W ~ Bernoulli(e(x)) or continuous W = e(x) + U(-h,h);
// Y = m(x) + W * tau(x) + N(0, noise_sd^2).
SynthSample generate(const DgpSpec& spec);

double oracle_cate(const DgpSpec& spec, std::span<const double> x);

// Fresh covariate draws from the spec's X distribution (no W or Y).
Matrix draw_covariates(const DgpSpec& spec, std::size_t rows, std::uint64_t seed);

// Named scenarios:
//   confounded  e = 0.25 + 0.5 x1, m = 5 x1, tau = 1
//   randomized  e = 0.5, m = x2, tau = 1
//   step        e = 0.5, m = x2, tau = 2 * 1[x1 > 0.5]
//   linear      e = 0.5, m = x2, tau = 1 + 2 x1
//   interaction e = 0.5, m = x2, tau = 2 x1 x2
//   continuous  W = 0.5 + 0.5 x1 + U(-0.5, 0.5), m = 2 x1, tau = 1 + 2 x1
DgpSpec preset(std::string_view name, std::size_t n, std::size_t p, std::uint64_t seed);
std::vector<std::string> preset_names();

}  // namespace cfaudit::synth
