// NEON variants for aarch64 (2-lane float64x2_t).
#include <arm_neon.h>

#include "smore/kernels.hpp"

namespace smore::kernels {

namespace {

inline double dot_row(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + j), vld1q_f64(y + j));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + j + 2), vld1q_f64(y + j + 2));
  }
  for (; j + 2 <= n; j += 2) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + j), vld1q_f64(y + j));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; j < n; ++j) acc += x[j] * y[j];
  return acc;
}

void matvec_neon(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_row(a + i * n, x, n);
}

void matvec_t_neon(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a + i * n;
    const float64x2_t xi = vdupq_n_f64(x[i]);
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      float64x2_t acc = vld1q_f64(y + j);
      acc = vfmaq_f64(acc, xi, vld1q_f64(row + j));
      vst1q_f64(y + j, acc);
    }
    const double xs = x[i];
    for (; j < n; ++j) y[j] += xs * row[j];
  }
}

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t acc = vld1q_f64(y + i);
    acc = vfmaq_f64(acc, av, vld1q_f64(x + i));
    vst1q_f64(y + i, acc);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_neon(std::size_t n, const double* x, const double* y) { return dot_row(x, y, n); }

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{matvec_neon, matvec_t_neon, axpy_neon, dot_neon};
  return t;
}

}  // namespace smore::kernels
