#pragma once

#include "cfaudit/kernels.hpp"

namespace cfaudit::kernels::detail {

// Reference per-unit formulas. SIMD variants evaluate the same operations in
// the same order so that results match bit-for-bit.

// Classical augmented inverse-propensity weighting.
inline double aipw_one(double w, double y, double e, double m1, double m0) {
  const double delta = m1 - m0;
  return (delta + (w * (y - m1)) / e) - ((1.0 - w) * (y - m0)) / (1.0 - e);
}

// IPW contrast plus the arm-difference correction, as written in the source
// estimator: (WY/e - (1-W)Y/(1-e)) + (m1-m0) - (W-e)/(e(1-e)) * (m1-m0).
inline double paper_one(double w, double y, double e, double m1, double m0) {
  const double ipw = (w * y) / e - ((1.0 - w) * y) / (1.0 - e);
  const double delta = m1 - m0;
  return (ipw + delta) - ((w - e) / (e * (1.0 - e))) * delta;
}

double sum_scalar(const double* x, std::size_t n);
double dot_scalar(const double* a, const double* b, std::size_t n);
double residual_sq_sum_scalar(const double* y, const double* w, const double* tau, std::size_t n);
double gather_sum_scalar(const double* values, const std::uint32_t* idx, std::size_t n);
double gather_dot_scalar(const double* a, const double* b, const std::uint32_t* idx,
                         std::size_t n);
void aipw_scores_scalar(const ScoreInputs& in, double* out);
void paper_scores_scalar(const ScoreInputs& in, double* out);

#if defined(__x86_64__) || defined(_M_X64)
#define CFAUDIT_HAVE_AVX2_KERNELS 1
double sum_avx2(const double* x, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
double residual_sq_sum_avx2(const double* y, const double* w, const double* tau, std::size_t n);
double gather_sum_avx2(const double* values, const std::uint32_t* idx, std::size_t n);
double gather_dot_avx2(const double* a, const double* b, const std::uint32_t* idx,
                       std::size_t n);
void aipw_scores_avx2(const ScoreInputs& in, double* out);
void paper_scores_avx2(const ScoreInputs& in, double* out);
#endif

#if defined(__aarch64__) && defined(__ARM_NEON)
#define CFAUDIT_HAVE_NEON_KERNELS 1
double sum_neon(const double* x, std::size_t n);
double dot_neon(const double* a, const double* b, std::size_t n);
double residual_sq_sum_neon(const double* y, const double* w, const double* tau, std::size_t n);
double gather_sum_neon(const double* values, const std::uint32_t* idx, std::size_t n);
double gather_dot_neon(const double* a, const double* b, const std::uint32_t* idx,
                       std::size_t n);
void aipw_scores_neon(const ScoreInputs& in, double* out);
void paper_scores_neon(const ScoreInputs& in, double* out);
#endif

}  // namespace cfaudit::kernels::detail
