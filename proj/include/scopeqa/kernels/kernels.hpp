#pragma once

// Dense arithmetic kernels behind the nn layer set.
//
// Every kernel has a portable scalar reference (`*_ref`) and, on x86-64, an
// AVX2+FMA variant (`*_avx2`). The dispatching entry points pick a variant
// once at startup from CPUID; SCOPEQA_ISA=scalar forces the reference path.
// Double precision always runs the reference path (gradient checking only).

#include <cstddef>
#include <string_view>

namespace scopeqa::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// True when the CPU supports AVX2 and FMA and the AVX2 objects were built.
bool avx2_supported();

Isa active_isa();
// Overrides the dispatch choice; kAvx2 is ignored when unsupported.
void set_isa(Isa isa);

enum class Trans { kNo, kYes };

// C[M x N] (+)= op(A) * op(B), all row-major. op(A) is M x K, op(B) is K x N.
// lda/ldb/ldc are row strides of the stored (untransposed) matrices.
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  std::size_t lda = 0, ldb = 0, ldc = 0;
  Trans trans_a = Trans::kNo;
  Trans trans_b = Trans::kNo;
  bool accumulate = false;
};

void gemm(const GemmShape& s, const float* a, const float* b, float* c);
void gemm(const GemmShape& s, const double* a, const double* b, double* c);

float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

struct AdamCoefficients {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double bias1 = 1.0;  // 1 - beta1^t
  double bias2 = 1.0;  // 1 - beta2^t
};

// One bias-corrected Adam update over a flat parameter block.
void adam_update(std::size_t n, const AdamCoefficients& c, const float* grad,
                 float* m, float* v, float* param);
void adam_update(std::size_t n, const AdamCoefficients& c, const double* grad,
                 double* m, double* v, double* param);

// Variant entry points, exposed for equivalence tests and benchmarks.
template <class T>
void gemm_ref(const GemmShape& s, const T* a, const T* b, T* c);
template <class T>
T dot_ref(const T* x, const T* y, std::size_t n);
template <class T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y);
template <class T>
void adam_update_ref(std::size_t n, const AdamCoefficients& c, const T* grad,
                     T* m, T* v, T* param);

void gemm_avx2(const GemmShape& s, const float* a, const float* b, float* c);
float dot_avx2(const float* x, const float* y, std::size_t n);
void axpy_avx2(std::size_t n, float alpha, const float* x, float* y);
void adam_update_avx2(std::size_t n, const AdamCoefficients& c,
                      const float* grad, float* m, float* v, float* param);

}  // namespace scopeqa::kernels
