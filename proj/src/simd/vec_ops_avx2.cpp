// AVX2+FMA kernel variants. Compiled with -mavx2 -mfma in this TU only;
// callers reach them through the dispatch table, never directly.

#include "simd/vec_ops.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace flowseed::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swap = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swap));
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    __m256d y1 = _mm256_loadu_pd(y + i + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
    _mm256_storeu_pd(y + i, y0);
    _mm256_storeu_pd(y + i + 4, y1);
  }
  for (; i + 4 <= n; i += 4) {
    __m256d y0 = _mm256_loadu_pd(y + i);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
    _mm256_storeu_pd(y + i, y0);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_avx2(std::size_t n, const double* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void scale_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = a * x[i];
}

void relu_avx2(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(std::size_t n, const double* x, const double* dy,
                        double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), add));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void conv3_row_acc_avx2(std::size_t n, const double* r0, const double* r1,
                        const double* r2, const double* w, double* out) {
  const __m256d w0 = _mm256_set1_pd(w[0]), w1 = _mm256_set1_pd(w[1]),
                w2 = _mm256_set1_pd(w[2]), w3 = _mm256_set1_pd(w[3]),
                w4 = _mm256_set1_pd(w[4]), w5 = _mm256_set1_pd(w[5]),
                w6 = _mm256_set1_pd(w[6]), w7 = _mm256_set1_pd(w[7]),
                w8 = _mm256_set1_pd(w[8]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_loadu_pd(out + i);
    acc = _mm256_fmadd_pd(w0, _mm256_loadu_pd(r0 + i), acc);
    acc = _mm256_fmadd_pd(w1, _mm256_loadu_pd(r0 + i + 1), acc);
    acc = _mm256_fmadd_pd(w2, _mm256_loadu_pd(r0 + i + 2), acc);
    acc = _mm256_fmadd_pd(w3, _mm256_loadu_pd(r1 + i), acc);
    acc = _mm256_fmadd_pd(w4, _mm256_loadu_pd(r1 + i + 1), acc);
    acc = _mm256_fmadd_pd(w5, _mm256_loadu_pd(r1 + i + 2), acc);
    acc = _mm256_fmadd_pd(w6, _mm256_loadu_pd(r2 + i), acc);
    acc = _mm256_fmadd_pd(w7, _mm256_loadu_pd(r2 + i + 1), acc);
    acc = _mm256_fmadd_pd(w8, _mm256_loadu_pd(r2 + i + 2), acc);
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = out[i];
    acc += w[0] * r0[i] + w[1] * r0[i + 1] + w[2] * r0[i + 2];
    acc += w[3] * r1[i] + w[4] * r1[i + 1] + w[5] * r1[i + 2];
    acc += w[6] * r2[i] + w[7] * r2[i + 1] + w[8] * r2[i + 2];
    out[i] = acc;
  }
}

void corr3_row_acc_avx2(std::size_t n, const double* g, const double* r0,
                        const double* r1, const double* r2, double* w9) {
  __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd(),
          a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd(),
          a4 = _mm256_setzero_pd(), a5 = _mm256_setzero_pd(),
          a6 = _mm256_setzero_pd(), a7 = _mm256_setzero_pd(),
          a8 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    a0 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r0 + i), a0);
    a1 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r0 + i + 1), a1);
    a2 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r0 + i + 2), a2);
    a3 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r1 + i), a3);
    a4 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r1 + i + 1), a4);
    a5 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r1 + i + 2), a5);
    a6 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r2 + i), a6);
    a7 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r2 + i + 1), a7);
    a8 = _mm256_fmadd_pd(gv, _mm256_loadu_pd(r2 + i + 2), a8);
  }
  double acc[9] = {hsum(a0), hsum(a1), hsum(a2), hsum(a3), hsum(a4),
                   hsum(a5), hsum(a6), hsum(a7), hsum(a8)};
  for (; i < n; ++i) {
    const double gi = g[i];
    acc[0] += gi * r0[i];
    acc[1] += gi * r0[i + 1];
    acc[2] += gi * r0[i + 2];
    acc[3] += gi * r1[i];
    acc[4] += gi * r1[i + 1];
    acc[5] += gi * r1[i + 2];
    acc[6] += gi * r2[i];
    acc[7] += gi * r2[i + 1];
    acc[8] += gi * r2[i + 2];
  }
  for (int k = 0; k < 9; ++k) w9[k] += acc[k];
}

void adam_update_avx2(std::size_t n, double* p, const double* g, double* m,
                      double* v, double beta1, double beta2, double bias1_inv,
                      double bias2_inv, double lr, double eps) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vcorr1 = _mm256_set1_pd(bias1_inv);
  const __m256d vcorr2 = _mm256_set1_pd(bias2_inv);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i),
                                       _mm256_mul_pd(vb1c, gv));
    const __m256d vv = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                       _mm256_mul_pd(vb2c, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d denom =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, vcorr2)), veps);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(vlr, _mm256_mul_pd(mv, vcorr1)), denom);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    const double gi = g[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
    const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
    m[i] = mi;
    v[i] = vi;
    p[i] -= lr * (mi * bias1_inv) / (std::sqrt(vi * bias2_inv) + eps);
  }
}

}  // namespace

namespace detail {

const VecOpsTable avx2_table = {
    axpy_avx2,     dot_avx2,          sum_avx2,
    scale_avx2,    relu_avx2,         relu_backward_avx2,
    conv3_row_acc_avx2, corr3_row_acc_avx2, adam_update_avx2,
};

}  // namespace detail
}  // namespace flowseed::simd

#endif  // __AVX2__ && __FMA__
