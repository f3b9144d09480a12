#pragma once

// Data-parallel arithmetic used on the hot paths of fitting and scoring.
//
// Every kernel has a portable scalar reference implementation and, where the
// host supports it, a SIMD variant (AVX2 on x86-64, NEON on AArch64). The
// variant is chosen once at startup from the CPU feature bits and can be
// overridden for testing. Elementwise kernels produce bit-identical output in
// every variant. Reductions differ from the scalar result only by summation
// order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cfaudit::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

// Inputs of the per-unit doubly robust score constructions. All spans have
// the same length.
struct ScoreInputs {
  std::span<const double> w;
  std::span<const double> y;
  std::span<const double> e_hat;
  std::span<const double> m1_hat;
  std::span<const double> m0_hat;
};

struct KernelTable {
  Isa isa;
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // sum_i (y_i - w_i * tau_i)^2
  double (*residual_sq_sum)(const double* y, const double* w, const double* tau, std::size_t n);
  // sum_k values[idx_k]
  double (*gather_sum)(const double* values, const std::uint32_t* idx, std::size_t n);
  // sum_k a[idx_k] * b[idx_k]
  double (*gather_dot)(const double* a, const double* b, const std::uint32_t* idx, std::size_t n);
  void (*aipw_scores)(const ScoreInputs& in, double* out);
  void (*paper_scores)(const ScoreInputs& in, double* out);
};

// Variant tables. simd_table returns nullptr when the variant is not compiled
// in for this target.
const KernelTable& scalar_table();
const KernelTable* simd_table(Isa isa);

// Variants compiled in and supported by the running CPU, scalar first.
std::vector<Isa> available_isas();

// The variant used by the free functions below.
Isa active_isa();
// Throws std::invalid_argument when isa is not available on this host.
void set_isa(Isa isa);
const KernelTable& active();

double sum(std::span<const double> x);
double dot(std::span<const double> a, std::span<const double> b);
double residual_sq_sum(std::span<const double> y, std::span<const double> w,
                       std::span<const double> tau);
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx);
double gather_dot(std::span<const double> a, std::span<const double> b,
                  std::span<const std::uint32_t> idx);
void aipw_scores(const ScoreInputs& in, std::span<double> out);
void paper_scores(const ScoreInputs& in, std::span<double> out);

}  // namespace cfaudit::kernels
