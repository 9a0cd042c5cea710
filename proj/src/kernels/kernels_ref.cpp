#include <cmath>

#include "scopeqa/kernels/kernels.hpp"

namespace scopeqa::kernels {

namespace {

template <class T>
T at(const T* m, std::size_t ld, Trans t, std::size_t row, std::size_t col) {
  return t == Trans::kNo ? m[row * ld + col] : m[col * ld + row];
}

}  // namespace

template <class T>
void gemm_ref(const GemmShape& s, const T* a, const T* b, T* c) {
  if (!s.accumulate) {
    for (std::size_t i = 0; i < s.m; ++i) {
      for (std::size_t j = 0; j < s.n; ++j) c[i * s.ldc + j] = T(0);
    }
  }
  if (s.trans_b == Trans::kNo) {
    // Row-update order: C[i,:] += A(i,p) * B[p,:]
    for (std::size_t i = 0; i < s.m; ++i) {
      T* crow = c + i * s.ldc;
      for (std::size_t p = 0; p < s.k; ++p) {
        const T av = at(a, s.lda, s.trans_a, i, p);
        if (av == T(0)) continue;
        const T* brow = b + p * s.ldb;
        for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < s.k; ++p) {
        acc += at(a, s.lda, s.trans_a, i, p) * b[j * s.ldb + p];
      }
      c[i * s.ldc + j] += acc;
    }
  }
}

template <class T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
void axpy_ref(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void adam_update_ref(std::size_t n, const AdamCoefficients& c, const T* grad,
                     T* m, T* v, T* param) {
  const T b1 = T(c.beta1), b2 = T(c.beta2);
  const T step = T(c.lr / c.bias1);
  const T inv_bias2 = T(1.0 / c.bias2);
  const T eps = T(c.eps);
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    param[i] -= step * m[i] / (std::sqrt(v[i] * inv_bias2) + eps);
  }
}

template void gemm_ref<float>(const GemmShape&, const float*, const float*, float*);
template void gemm_ref<double>(const GemmShape&, const double*, const double*, double*);
template float dot_ref<float>(const float*, const float*, std::size_t);
template double dot_ref<double>(const double*, const double*, std::size_t);
template void axpy_ref<float>(std::size_t, float, const float*, float*);
template void axpy_ref<double>(std::size_t, double, const double*, double*);
template void adam_update_ref<float>(std::size_t, const AdamCoefficients&,
                                     const float*, float*, float*, float*);
template void adam_update_ref<double>(std::size_t, const AdamCoefficients&,
                                      const double*, double*, double*, double*);

}  // namespace scopeqa::kernels
