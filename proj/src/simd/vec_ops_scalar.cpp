// Scalar reference kernels. These define the semantics; the AVX2 variants are
// checked against them in tests/test_simd.cpp.

#include <cmath>
#include <cstddef>

#include "simd/vec_ops.hpp"

namespace flowseed::simd {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_scalar(std::size_t n, const double* x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void scale_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void relu_scalar(std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(std::size_t n, const double* x, const double* dy,
                          double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

void conv3_row_acc_scalar(std::size_t n, const double* r0, const double* r1,
                          const double* r2, const double* w, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = out[i];
    acc += w[0] * r0[i] + w[1] * r0[i + 1] + w[2] * r0[i + 2];
    acc += w[3] * r1[i] + w[4] * r1[i + 1] + w[5] * r1[i + 2];
    acc += w[6] * r2[i] + w[7] * r2[i + 1] + w[8] * r2[i + 2];
    out[i] = acc;
  }
}

void corr3_row_acc_scalar(std::size_t n, const double* g, const double* r0,
                          const double* r1, const double* r2, double* w9) {
  double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
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

void adam_update_scalar(std::size_t n, double* p, const double* g, double* m,
                        double* v, double beta1, double beta2, double bias1_inv,
                        double bias2_inv, double lr, double eps) {
  for (std::size_t i = 0; i < n; ++i) {
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

const VecOpsTable scalar_table = {
    axpy_scalar,     dot_scalar,          sum_scalar,
    scale_scalar,    relu_scalar,         relu_backward_scalar,
    conv3_row_acc_scalar, corr3_row_acc_scalar, adam_update_scalar,
};

}  // namespace detail
}  // namespace flowseed::simd
