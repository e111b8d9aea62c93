#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Low-level dense kernels behind the numerics layer. A scalar reference
// implementation always exists; vectorized variants (AVX2 on x86-64, NEON on
// aarch64) are selected at runtime from CPU capabilities and can be overridden
// for testing. All kernels operate on contiguous double-precision buffers.
namespace smore::kernels {

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  // y[0..m) = A x, A row-major m x n
  void (*matvec)(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
  // y[0..n) = A^T x, A row-major m x n, x length m
  void (*matvec_t)(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& active();
Backend active_backend();
std::string backend_name(Backend b);

// Returns false (and leaves the previous selection) if the backend is not
// available on this CPU. The environment variable SMORE_KERNELS=scalar|avx2|neon
// is honored on first use.
bool set_backend(Backend b);
std::vector<Backend> supported_backends();

const KernelTable& table_for(Backend b);

}  // namespace smore::kernels
