#include <atomic>
#include <stdexcept>
#include <string>

#include "kernels_internal.hpp"

namespace cfaudit::kernels {

using namespace detail;

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar,        sum_scalar,         dot_scalar,
                                 residual_sq_sum_scalar, gather_sum_scalar, gather_dot_scalar,
                                 aipw_scores_scalar,  paper_scores_scalar};
  return table;
}

const KernelTable* simd_table(Isa isa) {
#if defined(CFAUDIT_HAVE_AVX2_KERNELS)
  if (isa == Isa::kAvx2) {
    static const KernelTable table{Isa::kAvx2,         sum_avx2,         dot_avx2,
                                   residual_sq_sum_avx2, gather_sum_avx2, gather_dot_avx2,
                                   aipw_scores_avx2,   paper_scores_avx2};
    return &table;
  }
#endif
#if defined(CFAUDIT_HAVE_NEON_KERNELS)
  if (isa == Isa::kNeon) {
    static const KernelTable table{Isa::kNeon,         sum_neon,         dot_neon,
                                   residual_sq_sum_neon, gather_sum_neon, gather_dot_neon,
                                   aipw_scores_neon,   paper_scores_neon};
    return &table;
  }
#endif
  if (isa == Isa::kScalar) return &scalar_table();
  return nullptr;
}

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(CFAUDIT_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(CFAUDIT_HAVE_NEON_KERNELS)
      return true;  // Advanced SIMD is mandatory on AArch64.
#else
      return false;
#endif
  }
  return false;
}

const KernelTable* detect() {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (cpu_supports(isa) && simd_table(isa) != nullptr) return simd_table(isa);
  }
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{detect()};
  return slot;
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::kScalar};
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (cpu_supports(isa) && simd_table(isa) != nullptr) out.push_back(isa);
  }
  return out;
}

Isa active_isa() { return active_slot().load()->isa; }

void set_isa(Isa isa) {
  if (!cpu_supports(isa) || simd_table(isa) == nullptr) {
    throw std::invalid_argument("kernel variant not available on this host: " +
                                std::string(isa_name(isa)));
  }
  active_slot().store(simd_table(isa));
}

const KernelTable& active() { return *active_slot().load(); }

double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double dot(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size(), "dot");
  return active().dot(a.data(), b.data(), a.size());
}

double residual_sq_sum(std::span<const double> y, std::span<const double> w,
                       std::span<const double> tau) {
  check_same(y.size(), w.size(), "residual_sq_sum");
  check_same(y.size(), tau.size(), "residual_sq_sum");
  return active().residual_sq_sum(y.data(), w.data(), tau.data(), y.size());
}

double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) {
  return active().gather_sum(values.data(), idx.data(), idx.size());
}

double gather_dot(std::span<const double> a, std::span<const double> b,
                  std::span<const std::uint32_t> idx) {
  check_same(a.size(), b.size(), "gather_dot");
  return active().gather_dot(a.data(), b.data(), idx.data(), idx.size());
}

namespace {
void check_scores(const ScoreInputs& in, std::span<double> out) {
  const std::size_t n = in.w.size();
  check_same(n, in.y.size(), "scores");
  check_same(n, in.e_hat.size(), "scores");
  check_same(n, in.m1_hat.size(), "scores");
  check_same(n, in.m0_hat.size(), "scores");
  check_same(n, out.size(), "scores");
}
}  // namespace

void aipw_scores(const ScoreInputs& in, std::span<double> out) {
  check_scores(in, out);
  active().aipw_scores(in, out.data());
}

void paper_scores(const ScoreInputs& in, std::span<double> out) {
  check_scores(in, out);
  active().paper_scores(in, out.data());
}

}  // namespace cfaudit::kernels
