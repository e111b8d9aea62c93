#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace smore {

enum class Variant { smore, smore_star, smore_shared, molre, momor };
enum class Activation { identity, relu, mlp };
enum class GateType { dense, noisy_topk, switch_gate };

std::string to_string(Variant v);
std::string to_string(Activation a);
std::string to_string(GateType g);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full model hyperparameters. Immutable after validation; every other module
// consumes it by const reference.
struct ArchitectureSpec {
  int depth = 1;                    // number of adapter layers L
  std::vector<int> expert_counts;   // s_l, one per layer
  std::vector<int> ranks;           // r_l
  std::vector<int> fanouts;         // f_l; forced to s_l under the dense gate
  int base_dim = 0;                 // token embedding dim d
  int output_dim = 0;               // d_out (defaults to d)
  Variant variant = Variant::smore;
  Activation activation = Activation::relu;
  int mlp_hidden = 0;               // 0 = use the layer output dim
  GateType gate = GateType::dense;
  int router_down_dim = 24;         // d_down
  int router_key_dim = 16;          // m
  double balance_coeff = 0.01;      // gamma
  bool bias_enabled = false;
  bool bottom_up = false;

  // fanout actually used by the router
  int effective_fanout(int layer) const {
    return gate == GateType::dense ? expert_counts[layer] : fanouts[layer];
  }
};

struct DimensionSchedule {
  std::vector<int> dims;  // d_0 .. d_L, d_0 = 0

  int at(int level) const { return dims.at(static_cast<std::size_t>(level)); }
  int inner_dim() const { return dims.back(); }  // d_L
};

// d_0 = 0, d_{l+1} = d_l + s_l * r_l; the shared variant pins every level to
// s * r instead.
DimensionSchedule dimension_schedule(const ArchitectureSpec& spec);

// F_l = prod_{i=l}^{L-1} f_i with F_L = 1. Uses the effective (gate-adjusted)
// fanouts. Throws if l is outside [0, L].
long long total_fanout(const ArchitectureSpec& spec, int layer);

// Returns every violated invariant; empty means the spec is well formed.
std::vector<std::string> validate(const ArchitectureSpec& spec);

// Throws ConfigError with the joined message list if validation fails.
void validate_or_throw(const ArchitectureSpec& spec);

// JSON round-trip. Keys are snake_case and unknown keys are rejected so that
// typos in experiment configs fail loudly.
ArchitectureSpec spec_from_json_text(const std::string& text);
ArchitectureSpec spec_from_json_file(const std::string& path);
std::string spec_to_json_text(const ArchitectureSpec& spec);

// FNV-1a over the canonical resolved-config text; stable across platforms,
// used for provenance comments in CSV outputs.
std::uint64_t config_hash(const ArchitectureSpec& spec);

}  // namespace smore
