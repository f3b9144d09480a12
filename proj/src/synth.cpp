#include "cfaudit/synth.hpp"

#include <random>

#include "cfaudit/error.hpp"
#include "cfaudit/rng.hpp"

namespace cfaudit::synth {

std::string_view effect_kind_name(EffectKind k) {
  switch (k) {
    case EffectKind::kConstant: return "constant";
    case EffectKind::kLinear: return "linear";
    case EffectKind::kStep: return "step";
    case EffectKind::kInteraction: return "interaction";
  }
  return "unknown";
}

EffectKind parse_effect_kind(std::string_view s) {
  if (s == "constant") return EffectKind::kConstant;
  if (s == "linear") return EffectKind::kLinear;
  if (s == "step") return EffectKind::kStep;
  if (s == "interaction") return EffectKind::kInteraction;
  throw UsageError("unknown effect function '" + std::string(s) + "'");
}

double EffectFunction::operator()(std::span<const double> x) const {
  switch (kind) {
    case EffectKind::kConstant: return base;
    case EffectKind::kLinear: return base + scale * x[feature];
    case EffectKind::kStep: return base + (x[feature] > threshold ? scale : 0.0);
    case EffectKind::kInteraction: return base + scale * x[feature] * x[feature2];
  }
  return base;
}

void DgpSpec::validate() const {
  if (n == 0) throw UsageError("synth: n must be positive");
  if (p == 0) throw UsageError("synth: p must be positive");
  if (!(noise_sd >= 0.0)) throw UsageError("synth: noise sd must be non-negative");
  if (propensity.feature >= p || baseline.feature >= p || effect.feature >= p) {
    throw UsageError("synth: function references a feature beyond p");
  }
  if (effect.kind == EffectKind::kInteraction && effect.feature2 >= p) {
    throw UsageError("synth: interaction references a feature beyond p");
  }
  if (treatment == TreatmentType::kBinary) {
    // x is supported on [0,1], so the extremes of a linear propensity are at
    // x = 0 and x = 1.
    const double lo = std::min(propensity.intercept, propensity.intercept + propensity.slope);
    const double hi = std::max(propensity.intercept, propensity.intercept + propensity.slope);
    if (lo < 0.05 || hi > 0.95) throw UsageError("synth: propensity must stay within [0.05, 0.95]");
  } else if (!(treatment_noise >= 0.0)) {
    throw UsageError("synth: treatment noise must be non-negative");
  }
}

Matrix draw_covariates(const DgpSpec& spec, std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(rows, spec.p);
  for (double& v : x.data()) v = unif(rng);
  return x;
}

SynthSample generate(const DgpSpec& spec) {
  spec.validate();
  SynthSample s;
  Dataset& d = s.data;
  d.x = draw_covariates(spec, spec.n, derive_seed(spec.seed, 0));
  d.feature_names.resize(spec.p);
  for (std::size_t j = 0; j < spec.p; ++j) d.feature_names[j] = "x" + std::to_string(j + 1);
  d.missing_mask.assign(spec.n * spec.p, 0);
  d.w.resize(spec.n);
  d.y.resize(spec.n);
  s.tau.resize(spec.n);
  s.propensity.resize(spec.n);
  s.y0.resize(spec.n);
  s.y1.resize(spec.n);

  Rng rng(derive_seed(spec.seed, 1));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  double tau_sum = 0.0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    const auto xi = d.x.row(i);
    const double e = spec.propensity(xi);
    const double tau = spec.effect(xi);
    const double m = spec.baseline(xi);
    double w;
    if (spec.treatment == TreatmentType::kBinary) {
      w = unif(rng) < e ? 1.0 : 0.0;
    } else {
      w = e + spec.treatment_noise * (2.0 * unif(rng) - 1.0);
    }
    const double eps = spec.noise_sd * noise(rng);
    s.propensity[i] = e;
    s.tau[i] = tau;
    s.y0[i] = m + eps;
    s.y1[i] = m + tau + eps;
    d.w[i] = w;
    d.y[i] = m + w * tau + eps;
    tau_sum += tau;
  }
  s.true_ate = tau_sum / static_cast<double>(spec.n);
  return s;
}

double oracle_cate(const DgpSpec& spec, std::span<const double> x) { return spec.effect(x); }

DgpSpec preset(std::string_view name, std::size_t n, std::size_t p, std::uint64_t seed) {
  DgpSpec s;
  s.n = n;
  s.p = p;
  s.seed = seed;
  s.noise_sd = 1.0;
  s.propensity = {0.5, 0.0, 0};
  s.baseline = {0.0, 1.0, p > 1 ? std::size_t{1} : std::size_t{0}};
  if (name == "confounded") {
    s.propensity = {0.25, 0.5, 0};
    s.baseline = {0.0, 5.0, 0};
    s.effect = {EffectKind::kConstant, 1.0, 0.0};
  } else if (name == "randomized") {
    s.effect = {EffectKind::kConstant, 1.0, 0.0};
  } else if (name == "step") {
    s.effect = {EffectKind::kStep, 0.0, 2.0, 0, 1, 0.5};
  } else if (name == "linear") {
    s.effect = {EffectKind::kLinear, 1.0, 2.0, 0};
  } else if (name == "interaction") {
    s.effect = {EffectKind::kInteraction, 0.0, 2.0, 0, 1};
  } else if (name == "continuous") {
    s.treatment = TreatmentType::kContinuous;
    s.propensity = {0.5, 0.5, 0};
    s.baseline = {0.0, 2.0, 0};
    s.effect = {EffectKind::kLinear, 1.0, 2.0, 0};
  } else {
    throw UsageError("unknown synth preset '" + std::string(name) + "'");
  }
  s.validate();
  return s;
}

std::vector<std::string> preset_names() {
  return {"confounded", "randomized", "step", "linear", "interaction", "continuous"};
}

}  // namespace cfaudit::synth
