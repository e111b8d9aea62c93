#pragma once

#include <cstdint>

namespace smore {

// Counter-based deterministic generator (splitmix64 finalizer over an
// incrementing counter). No global state: every consumer owns its RngState
// explicitly, and equal (seed, call sequence) pairs replay bit-exactly on any
// platform. Substreams for parallel work are derived with fork().
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  explicit RngState(std::uint64_t s = 0) : seed(s) {}

  std::uint64_t next_u64();
  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // standard normal via Box-Muller; consumes exactly two uniforms per call
  double normal();

  RngState fork(std::uint64_t stream) const;
};

}  // namespace smore
