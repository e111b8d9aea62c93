// AVX2 + FMA variants. Compiled with -mavx2 -mfma in its own translation unit;
// only dispatched at runtime when cpuid reports both features.
#include <immintrin.h>

#include "smore/kernels.hpp"

namespace smore::kernels {

namespace {

inline double hsum256(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

inline double dot_row(const double* x, const double* y, std::size_t n) {
  std::size_t j = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; j + 8 <= n; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j + 4), _mm256_loadu_pd(y + j + 4), acc1);
  }
  for (; j + 4 <= n; j += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j), acc0);
  }
  double acc = hsum256(_mm256_add_pd(acc0, acc1));
  for (; j < n; ++j) acc += x[j] * y[j];
  return acc;
}

void matvec_avx2(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_row(a + i * n, x, n);
}

void matvec_t_avx2(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t j = 0; j < n; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a + i * n;
    const __m256d xi = _mm256_set1_pd(x[i]);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_loadu_pd(y + j);
      acc = _mm256_fmadd_pd(xi, _mm256_loadu_pd(row + j), acc);
      _mm256_storeu_pd(y + j, acc);
    }
    const double xs = x[i];
    for (; j < n; ++j) y[j] += xs * row[j];
  }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_loadu_pd(y + i);
    acc = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), acc);
    _mm256_storeu_pd(y + i, acc);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) { return dot_row(x, y, n); }

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{matvec_avx2, matvec_t_avx2, axpy_avx2, dot_avx2};
  return t;
}

}  // namespace smore::kernels
