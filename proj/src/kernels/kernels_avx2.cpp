// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after avx2_supported() returned true.

#include <immintrin.h>

#include <cmath>
#include <cstdint>

#include "scopeqa/kernels/kernels.hpp"

namespace scopeqa::kernels {

namespace {

constexpr std::size_t kLanes = 8;

// mask for the first `count` lanes (count in [0, 8])
inline __m256i tail_mask(std::size_t count) {
  alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                      0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(
      reinterpret_cast<const __m256i*>(table + (kLanes - count)));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

// Rank-1 update micro-kernel: C[R x W] += sum_p A(:,p) B[p, :], W <= 16.
// A(i, p) = a[i * a_rs + p * a_cs].
template <int R>
void rank_update_tile(std::size_t k, const float* a, std::size_t a_rs,
                      std::size_t a_cs, const float* b, std::size_t ldb,
                      float* c, std::size_t ldc, std::size_t width,
                      bool accumulate) {
  const bool full0 = width >= kLanes;
  const std::size_t w1 = width > kLanes ? width - kLanes : 0;
  const __m256i m0 = tail_mask(full0 ? kLanes : width);
  const __m256i m1 = tail_mask(w1);
  const bool two = w1 > 0;

  __m256 acc0[R], acc1[R];
  for (int r = 0; r < R; ++r) {
    if (accumulate) {
      acc0[r] = _mm256_maskload_ps(c + r * ldc, m0);
      acc1[r] = two ? _mm256_maskload_ps(c + r * ldc + kLanes, m1)
                    : _mm256_setzero_ps();
    } else {
      acc0[r] = _mm256_setzero_ps();
      acc1[r] = _mm256_setzero_ps();
    }
  }
  if (two) {
    for (std::size_t p = 0; p < k; ++p) {
      const float* brow = b + p * ldb;
      const __m256 b0 = full0 ? _mm256_loadu_ps(brow) : _mm256_maskload_ps(brow, m0);
      const __m256 b1 = _mm256_maskload_ps(brow + kLanes, m1);
      const float* acol = a + p * a_cs;
      for (int r = 0; r < R; ++r) {
        const __m256 av = _mm256_broadcast_ss(acol + r * a_rs);
        acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
      }
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      const float* brow = b + p * ldb;
      const __m256 b0 = full0 ? _mm256_loadu_ps(brow) : _mm256_maskload_ps(brow, m0);
      const float* acol = a + p * a_cs;
      for (int r = 0; r < R; ++r) {
        const __m256 av = _mm256_broadcast_ss(acol + r * a_rs);
        acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      }
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_maskstore_ps(c + r * ldc, m0, acc0[r]);
    if (two) _mm256_maskstore_ps(c + r * ldc + kLanes, m1, acc1[r]);
  }
}

void gemm_rank_update(const GemmShape& s, const float* a, const float* b,
                      float* c) {
  const std::size_t a_rs = s.trans_a == Trans::kNo ? s.lda : 1;
  const std::size_t a_cs = s.trans_a == Trans::kNo ? 1 : s.lda;
  constexpr std::size_t kTileW = 2 * kLanes;
  constexpr std::size_t kTileR = 6;
  for (std::size_t j0 = 0; j0 < s.n; j0 += kTileW) {
    const std::size_t width = s.n - j0 < kTileW ? s.n - j0 : kTileW;
    std::size_t i0 = 0;
    for (; i0 + kTileR <= s.m; i0 += kTileR) {
      rank_update_tile<6>(s.k, a + i0 * a_rs, a_rs, a_cs, b + j0, s.ldb,
                          c + i0 * s.ldc + j0, s.ldc, width, s.accumulate);
    }
    const float* ai = a + i0 * a_rs;
    float* ci = c + i0 * s.ldc + j0;
    switch (s.m - i0) {
      case 5:
        rank_update_tile<5>(s.k, ai, a_rs, a_cs, b + j0, s.ldb, ci, s.ldc, width, s.accumulate);
        break;
      case 4:
        rank_update_tile<4>(s.k, ai, a_rs, a_cs, b + j0, s.ldb, ci, s.ldc, width, s.accumulate);
        break;
      case 3:
        rank_update_tile<3>(s.k, ai, a_rs, a_cs, b + j0, s.ldb, ci, s.ldc, width, s.accumulate);
        break;
      case 2:
        rank_update_tile<2>(s.k, ai, a_rs, a_cs, b + j0, s.ldb, ci, s.ldc, width, s.accumulate);
        break;
      case 1:
        rank_update_tile<1>(s.k, ai, a_rs, a_cs, b + j0, s.ldb, ci, s.ldc, width, s.accumulate);
        break;
      default:
        break;
    }
  }
}

// C[i, j] (+)= dot(A[i, :], B[j, :]) with both operands row-contiguous in k.
// 2 x 4 tiles of dot products share their loads.
template <int RA, int RB>
void dot_tile(std::size_t k, const float* a, std::size_t lda, const float* b,
              std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  __m256 acc[RA][RB];
  for (int i = 0; i < RA; ++i)
    for (int j = 0; j < RB; ++j) acc[i][j] = _mm256_setzero_ps();
  std::size_t p = 0;
  for (; p + kLanes <= k; p += kLanes) {
    __m256 av[RA];
    for (int i = 0; i < RA; ++i) av[i] = _mm256_loadu_ps(a + i * lda + p);
    for (int j = 0; j < RB; ++j) {
      const __m256 bv = _mm256_loadu_ps(b + j * ldb + p);
      for (int i = 0; i < RA; ++i) acc[i][j] = _mm256_fmadd_ps(av[i], bv, acc[i][j]);
    }
  }
  if (p < k) {
    const __m256i m = tail_mask(k - p);
    __m256 av[RA];
    for (int i = 0; i < RA; ++i) av[i] = _mm256_maskload_ps(a + i * lda + p, m);
    for (int j = 0; j < RB; ++j) {
      const __m256 bv = _mm256_maskload_ps(b + j * ldb + p, m);
      for (int i = 0; i < RA; ++i) acc[i][j] = _mm256_fmadd_ps(av[i], bv, acc[i][j]);
    }
  }
  for (int i = 0; i < RA; ++i) {
    for (int j = 0; j < RB; ++j) {
      float& out = c[i * ldc + j];
      out = accumulate ? out + hsum(acc[i][j]) : hsum(acc[i][j]);
    }
  }
}

void gemm_dots(const GemmShape& s, const float* a, const float* b, float* c) {
  std::size_t i = 0;
  for (; i + 2 <= s.m; i += 2) {
    std::size_t j = 0;
    for (; j + 4 <= s.n; j += 4) {
      dot_tile<2, 4>(s.k, a + i * s.lda, s.lda, b + j * s.ldb, s.ldb,
                     c + i * s.ldc + j, s.ldc, s.accumulate);
    }
    for (; j < s.n; ++j) {
      dot_tile<2, 1>(s.k, a + i * s.lda, s.lda, b + j * s.ldb, s.ldb,
                     c + i * s.ldc + j, s.ldc, s.accumulate);
    }
  }
  for (; i < s.m; ++i) {
    std::size_t j = 0;
    for (; j + 4 <= s.n; j += 4) {
      dot_tile<1, 4>(s.k, a + i * s.lda, s.lda, b + j * s.ldb, s.ldb,
                     c + i * s.ldc + j, s.ldc, s.accumulate);
    }
    for (; j < s.n; ++j) {
      dot_tile<1, 1>(s.k, a + i * s.lda, s.lda, b + j * s.ldb, s.ldb,
                     c + i * s.ldc + j, s.ldc, s.accumulate);
    }
  }
}

}  // namespace

void gemm_avx2(const GemmShape& s, const float* a, const float* b, float* c) {
  if (s.m == 0 || s.n == 0) return;
  if (s.k == 0) {
    if (!s.accumulate) {
      for (std::size_t i = 0; i < s.m; ++i)
        for (std::size_t j = 0; j < s.n; ++j) c[i * s.ldc + j] = 0.0f;
    }
    return;
  }
  if (s.trans_b == Trans::kNo) {
    gemm_rank_update(s, a, b, c);
  } else if (s.trans_a == Trans::kNo) {
    gemm_dots(s, a, b, c);
  } else {
    gemm_ref<float>(s, a, b, c);
  }
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + kLanes),
                           _mm256_loadu_ps(y + i + kLanes), acc1);
  }
  for (; i < n; i += kLanes) {
    const std::size_t rem = n - i < kLanes ? n - i : kLanes;
    const __m256i m = tail_mask(rem);
    acc0 = _mm256_fmadd_ps(_mm256_maskload_ps(x + i, m),
                           _mm256_maskload_ps(y + i, m), acc0);
  }
  return hsum(_mm256_add_ps(acc0, acc1));
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void adam_update_avx2(std::size_t n, const AdamCoefficients& c,
                      const float* grad, float* m, float* v, float* param) {
  const __m256 b1 = _mm256_set1_ps(float(c.beta1));
  const __m256 b1c = _mm256_set1_ps(1.0f - float(c.beta1));
  const __m256 b2 = _mm256_set1_ps(float(c.beta2));
  const __m256 b2c = _mm256_set1_ps(1.0f - float(c.beta2));
  const __m256 step = _mm256_set1_ps(float(c.lr / c.bias1));
  const __m256 inv_bias2 = _mm256_set1_ps(float(1.0 / c.bias2));
  const __m256 eps = _mm256_set1_ps(float(c.eps));
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)),
                                    _mm256_mul_ps(b1c, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(_mm256_mul_ps(b2c, g), g));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 denom =
        _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vi, inv_bias2)), eps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(step, mi), denom);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), upd));
  }
  if (i < n) adam_update_ref<float>(n - i, c, grad + i, m + i, v + i, param + i);
}

}  // namespace scopeqa::kernels
