#include "kernels_internal.hpp"

namespace cfaudit::kernels::detail {

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double residual_sq_sum_scalar(const double* y, const double* w, const double* tau, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - w[i] * tau[i];
    acc += r * r;
  }
  return acc;
}

double gather_sum_scalar(const double* values, const std::uint32_t* idx, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += values[idx[k]];
  return acc;
}

double gather_dot_scalar(const double* a, const double* b, const std::uint32_t* idx,
                         std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += a[idx[k]] * b[idx[k]];
  return acc;
}

void aipw_scores_scalar(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double w = in.w[i], y = in.y[i], e = in.e_hat[i];
    const double m1 = in.m1_hat[i], m0 = in.m0_hat[i];
    out[i] = aipw_one(w, y, e, m1, m0);
  }
}

void paper_scores_scalar(const ScoreInputs& in, double* out) {
  const std::size_t n = in.w.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = paper_one(in.w[i], in.y[i], in.e_hat[i], in.m1_hat[i], in.m0_hat[i]);
  }
}

}  // namespace cfaudit::kernels::detail
