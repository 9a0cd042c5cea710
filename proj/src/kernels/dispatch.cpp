#include <atomic>
#include <cstdlib>
#include <string>

#include "scopeqa/kernels/kernels.hpp"

namespace scopeqa::kernels {

namespace {

Isa detect() {
  if (!avx2_supported()) return Isa::kScalar;
  if (const char* env = std::getenv("SCOPEQA_ISA")) {
    if (std::string(env) == "scalar") return Isa::kScalar;
  }
  return Isa::kAvx2;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool avx2_supported() {
#if defined(SCOPEQA_HAVE_AVX2)
  static const bool ok = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return ok;
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && !avx2_supported()) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

#if defined(SCOPEQA_HAVE_AVX2)
#define SCOPEQA_USE_AVX2() (active_isa() == Isa::kAvx2)
#else
#define SCOPEQA_USE_AVX2() false
#endif

void gemm(const GemmShape& s, const float* a, const float* b, float* c) {
#if defined(SCOPEQA_HAVE_AVX2)
  if (SCOPEQA_USE_AVX2()) return gemm_avx2(s, a, b, c);
#endif
  gemm_ref<float>(s, a, b, c);
}

void gemm(const GemmShape& s, const double* a, const double* b, double* c) {
  gemm_ref<double>(s, a, b, c);
}

float dot(const float* x, const float* y, std::size_t n) {
#if defined(SCOPEQA_HAVE_AVX2)
  if (SCOPEQA_USE_AVX2()) return dot_avx2(x, y, n);
#endif
  return dot_ref<float>(x, y, n);
}

double dot(const double* x, const double* y, std::size_t n) {
  return dot_ref<double>(x, y, n);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
#if defined(SCOPEQA_HAVE_AVX2)
  if (SCOPEQA_USE_AVX2()) return axpy_avx2(n, alpha, x, y);
#endif
  axpy_ref<float>(n, alpha, x, y);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  axpy_ref<double>(n, alpha, x, y);
}

void adam_update(std::size_t n, const AdamCoefficients& c, const float* grad,
                 float* m, float* v, float* param) {
#if defined(SCOPEQA_HAVE_AVX2)
  if (SCOPEQA_USE_AVX2()) return adam_update_avx2(n, c, grad, m, v, param);
#endif
  adam_update_ref<float>(n, c, grad, m, v, param);
}

void adam_update(std::size_t n, const AdamCoefficients& c, const double* grad,
                 double* m, double* v, double* param) {
  adam_update_ref<double>(n, c, grad, m, v, param);
}

}  // namespace scopeqa::kernels
