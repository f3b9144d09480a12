#include "kernels_internal.hpp"

#if defined(CFAUDIT_HAVE_AVX2_KERNELS)

#include <immintrin.h>

#define CFAUDIT_AVX2 __attribute__((target("avx2")))

namespace cfaudit::kernels::detail {

namespace {

CFAUDIT_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

CFAUDIT_AVX2 inline __m256d gather4(const double* values, const std::uint32_t* idx) {
  const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx));
  return _mm256_i32gather_pd(values, vi, 8);
}

}  // namespace

CFAUDIT_AVX2 double sum_avx2(const double* x, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
    a1 = _mm256_add_pd(a1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) a0 = _mm256_add_pd(a0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

CFAUDIT_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d a0 = _mm256_setzero_pd();
  __m256d a1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    a1 = _mm256_add_pd(a1,
                       _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double acc = hsum(_mm256_add_pd(a0, a1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

CFAUDIT_AVX2 double residual_sq_sum_avx2(const double* y, const double* w, const double* tau,
                                         std::size_t n) {
  __m256d acc4 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_sub_pd(
        _mm256_loadu_pd(y + i), _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(tau + i)));
    acc4 = _mm256_add_pd(acc4, _mm256_mul_pd(r, r));
  }
  double acc = hsum(acc4);
  for (; i < n; ++i) {
    const double r = y[i] - w[i] * tau[i];
    acc += r * r;
  }
  return acc;
}

CFAUDIT_AVX2 double gather_sum_avx2(const double* values, const std::uint32_t* idx,
                                    std::size_t n) {
  __m256d acc4 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) acc4 = _mm256_add_pd(acc4, gather4(values, idx + k));
  double acc = hsum(acc4);
  for (; k < n; ++k) acc += values[idx[k]];
  return acc;
}

CFAUDIT_AVX2 double gather_dot_avx2(const double* a, const double* b, const std::uint32_t* idx,
                                    std::size_t n) {
  __m256d acc4 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    acc4 = _mm256_add_pd(acc4, _mm256_mul_pd(gather4(a, idx + k), gather4(b, idx + k)));
  }
  double acc = hsum(acc4);
  for (; k < n; ++k) acc += a[idx[k]] * b[idx[k]];
  return acc;
}

CFAUDIT_AVX2 void aipw_scores_avx2(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(in.w.data() + i);
    const __m256d y = _mm256_loadu_pd(in.y.data() + i);
    const __m256d e = _mm256_loadu_pd(in.e_hat.data() + i);
    const __m256d m1 = _mm256_loadu_pd(in.m1_hat.data() + i);
    const __m256d m0 = _mm256_loadu_pd(in.m0_hat.data() + i);
    const __m256d delta = _mm256_sub_pd(m1, m0);
    const __m256d treated = _mm256_div_pd(_mm256_mul_pd(w, _mm256_sub_pd(y, m1)), e);
    const __m256d control = _mm256_div_pd(_mm256_mul_pd(_mm256_sub_pd(one, w), _mm256_sub_pd(y, m0)),
                                          _mm256_sub_pd(one, e));
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_add_pd(delta, treated), control));
  }
  for (; i < n; ++i) {
    out[i] = aipw_one(in.w[i], in.y[i], in.e_hat[i], in.m1_hat[i], in.m0_hat[i]);
  }
}

CFAUDIT_AVX2 void paper_scores_avx2(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(in.w.data() + i);
    const __m256d y = _mm256_loadu_pd(in.y.data() + i);
    const __m256d e = _mm256_loadu_pd(in.e_hat.data() + i);
    const __m256d m1 = _mm256_loadu_pd(in.m1_hat.data() + i);
    const __m256d m0 = _mm256_loadu_pd(in.m0_hat.data() + i);
    const __m256d one_minus_e = _mm256_sub_pd(one, e);
    const __m256d ipw =
        _mm256_sub_pd(_mm256_div_pd(_mm256_mul_pd(w, y), e),
                      _mm256_div_pd(_mm256_mul_pd(_mm256_sub_pd(one, w), y), one_minus_e));
    const __m256d delta = _mm256_sub_pd(m1, m0);
    const __m256d weight = _mm256_div_pd(_mm256_sub_pd(w, e), _mm256_mul_pd(e, one_minus_e));
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_add_pd(ipw, delta), _mm256_mul_pd(weight, delta)));
  }
  for (; i < n; ++i) {
    out[i] = paper_one(in.w[i], in.y[i], in.e_hat[i], in.m1_hat[i], in.m0_hat[i]);
  }
}

}  // namespace cfaudit::kernels::detail

#endif
