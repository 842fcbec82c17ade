#pragma once

#include <cstddef>
#include <string>

namespace flowseed::simd {

enum class Level { Scalar, Avx2 };

// Double-precision primitives behind the training inner loops. Each entry has
// a scalar reference implementation and (on x86-64) an AVX2+FMA variant; the
// active table is chosen once at startup from CPUID, overridable with
// FLOWSEED_SIMD=scalar|avx2. SIMD variants may reassociate sums, so they are
// equivalence-tested against the scalar reference with tolerances rather
// than bit-for-bit.
struct VecOpsTable {
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
  double (*sum)(std::size_t n, const double* x);
  void (*scale)(std::size_t n, double a, const double* x, double* y);
  void (*relu)(std::size_t n, const double* x, double* y);
  // dx[i] += dy[i] where x[i] > 0
  void (*relu_backward)(std::size_t n, const double* x, const double* dy, double* dx);
  // 3x3 correlation row: out[i] += sum_j w[3k+j] * rk[i+j], k=0..2, j=0..2
  void (*conv3_row_acc)(std::size_t n, const double* r0, const double* r1,
                        const double* r2, const double* w, double* out);
  // accumulates the 9 tap correlations: w9[3k+j] += sum_i g[i] * rk[i+j]
  void (*corr3_row_acc)(std::size_t n, const double* g, const double* r0,
                        const double* r1, const double* r2, double* w9);
  // fused Adam update over one parameter array
  void (*adam_update)(std::size_t n, double* p, const double* g, double* m,
                      double* v, double beta1, double beta2, double bias1_inv,
                      double bias2_inv, double lr, double eps);
};

namespace detail {
extern const VecOpsTable scalar_table;
#if defined(FLOWSEED_HAVE_AVX2_TU)
extern const VecOpsTable avx2_table;
#endif
}  // namespace detail

// Active dispatch table; fetch once per kernel invocation and call through it
// in hot loops.
const VecOpsTable& ops();

Level active_level();
const char* level_name(Level level);
bool level_supported(Level level);

// Force a level (tests use this to compare implementations). Returns false
// and leaves the dispatch unchanged if the level is unavailable.
bool set_level(Level level);

// Convenience forwarders.
inline void axpy(std::size_t n, double a, const double* x, double* y) {
  ops().axpy(n, a, x, y);
}
inline double dot(std::size_t n, const double* x, const double* y) {
  return ops().dot(n, x, y);
}
inline double sum(std::size_t n, const double* x) { return ops().sum(n, x); }
inline void scale(std::size_t n, double a, const double* x, double* y) {
  ops().scale(n, a, x, y);
}

}  // namespace flowseed::simd
