#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smore/experts.hpp"
#include "smore/router.hpp"

namespace smore {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;  // tolerance and measured value
};

// Named check suites behind the `verify` subcommand. Every tolerance is pinned
// here; the acceptance suite reuses these checks.
std::vector<CheckResult> verify_props(std::uint64_t seed);
std::vector<CheckResult> verify_theorems();
std::vector<CheckResult> verify_gradients(std::uint64_t seed);
std::vector<CheckResult> verify_fig5(std::uint64_t seed);
std::vector<CheckResult> verify_costs();
std::vector<CheckResult> verify_invariants(std::uint64_t seed);
std::vector<CheckResult> verify_suite(const std::string& suite, std::uint64_t seed);

// init_bank with the up projections randomized as well, so outputs are
// nonzero; the generic-parameter setting used by the equivalence checks.
ExpertBank random_bank(const ArchitectureSpec& spec, RngState& rng);

// |a-b| / max(1, |a|, |b|) per coordinate, maximized.
double max_rel_err(const Vector& a, const Vector& b);

// The three two-layer trees over four bottom and two top experts that separate
// the variants: same activated experts, different interconnection.
std::vector<RoutingTree> discrimination_trio();
ArchitectureSpec discrimination_spec();

}  // namespace smore
