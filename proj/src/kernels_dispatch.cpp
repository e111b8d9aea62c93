#include <cstdlib>
#include <stdexcept>

#include "smore/kernels.hpp"

namespace smore::kernels {

const KernelTable& scalar_table();
#if defined(SMORE_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

namespace {

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(SMORE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend default_backend() {
  if (const char* env = std::getenv("SMORE_KERNELS")) {
    std::string s(env);
    if (s == "scalar") return Backend::scalar;
    if (s == "avx2" && backend_available(Backend::avx2)) return Backend::avx2;
    if (s == "neon" && backend_available(Backend::neon)) return Backend::neon;
  }
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend g_backend = default_backend();

}  // namespace

const KernelTable& table_for(Backend b) {
  switch (b) {
#if defined(SMORE_HAVE_AVX2)
    case Backend::avx2:
      return avx2_table();
#endif
#if defined(__aarch64__)
    case Backend::neon:
      return neon_table();
#endif
    default:
      return scalar_table();
  }
}

const KernelTable& active() { return table_for(g_backend); }

Backend active_backend() { return g_backend; }

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  g_backend = b;
  return true;
}

std::vector<Backend> supported_backends() {
  std::vector<Backend> out{Backend::scalar};
  if (backend_available(Backend::avx2)) out.push_back(Backend::avx2);
  if (backend_available(Backend::neon)) out.push_back(Backend::neon);
  return out;
}

}  // namespace smore::kernels
