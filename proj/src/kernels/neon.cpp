#include "kernels_internal.hpp"

#if defined(CFAUDIT_HAVE_NEON_KERNELS)

#include <arm_neon.h>

namespace cfaudit::kernels::detail {

double sum_neon(const double* x, std::size_t n) {
  float64x2_t a0 = vdupq_n_f64(0.0);
  float64x2_t a1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    a0 = vaddq_f64(a0, vld1q_f64(x + i));
    a1 = vaddq_f64(a1, vld1q_f64(x + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(a0, a1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc2 = vaddq_f64(acc2, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  double acc = vaddvq_f64(acc2);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double residual_sq_sum_neon(const double* y, const double* w, const double* tau, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t r = vsubq_f64(vld1q_f64(y + i), vmulq_f64(vld1q_f64(w + i), vld1q_f64(tau + i)));
    acc2 = vaddq_f64(acc2, vmulq_f64(r, r));
  }
  double acc = vaddvq_f64(acc2);
  for (; i < n; ++i) {
    const double r = y[i] - w[i] * tau[i];
    acc += r * r;
  }
  return acc;
}

// NEON has no gather; pairs are assembled lane by lane.
double gather_sum_neon(const double* values, const std::uint32_t* idx, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const double pair[2] = {values[idx[k]], values[idx[k + 1]]};
    acc2 = vaddq_f64(acc2, vld1q_f64(pair));
  }
  double acc = vaddvq_f64(acc2);
  for (; k < n; ++k) acc += values[idx[k]];
  return acc;
}

double gather_dot_neon(const double* a, const double* b, const std::uint32_t* idx, std::size_t n) {
  float64x2_t acc2 = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const double pa[2] = {a[idx[k]], a[idx[k + 1]]};
    const double pb[2] = {b[idx[k]], b[idx[k + 1]]};
    acc2 = vaddq_f64(acc2, vmulq_f64(vld1q_f64(pa), vld1q_f64(pb)));
  }
  double acc = vaddvq_f64(acc2);
  for (; k < n; ++k) acc += a[idx[k]] * b[idx[k]];
  return acc;
}

void aipw_scores_neon(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t w = vld1q_f64(in.w.data() + i);
    const float64x2_t y = vld1q_f64(in.y.data() + i);
    const float64x2_t e = vld1q_f64(in.e_hat.data() + i);
    const float64x2_t m1 = vld1q_f64(in.m1_hat.data() + i);
    const float64x2_t m0 = vld1q_f64(in.m0_hat.data() + i);
    const float64x2_t delta = vsubq_f64(m1, m0);
    const float64x2_t treated = vdivq_f64(vmulq_f64(w, vsubq_f64(y, m1)), e);
    const float64x2_t control =
        vdivq_f64(vmulq_f64(vsubq_f64(one, w), vsubq_f64(y, m0)), vsubq_f64(one, e));
    vst1q_f64(out + i, vsubq_f64(vaddq_f64(delta, treated), control));
  }
  for (; i < n; ++i) out[i] = aipw_one(in.w[i], in.y[i], in.e_hat[i], in.m1_hat[i], in.m0_hat[i]);
}

void paper_scores_neon(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  const float64x2_t one = vdupq_n_f64(1.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t w = vld1q_f64(in.w.data() + i);
    const float64x2_t y = vld1q_f64(in.y.data() + i);
    const float64x2_t e = vld1q_f64(in.e_hat.data() + i);
    const float64x2_t m1 = vld1q_f64(in.m1_hat.data() + i);
    const float64x2_t m0 = vld1q_f64(in.m0_hat.data() + i);
    const float64x2_t one_minus_e = vsubq_f64(one, e);
    const float64x2_t ipw = vsubq_f64(vdivq_f64(vmulq_f64(w, y), e),
                                      vdivq_f64(vmulq_f64(vsubq_f64(one, w), y), one_minus_e));
    const float64x2_t delta = vsubq_f64(m1, m0);
    const float64x2_t weight = vdivq_f64(vsubq_f64(w, e), vmulq_f64(e, one_minus_e));
    vst1q_f64(out + i, vsubq_f64(vaddq_f64(ipw, delta), vmulq_f64(weight, delta)));
  }
  for (; i < n; ++i) out[i] = paper_one(in.w[i], in.y[i], in.e_hat[i], in.m1_hat[i], in.m0_hat[i]);
}

}  // namespace cfaudit::kernels::detail

#endif
