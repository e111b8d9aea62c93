#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smore/config.hpp"
#include "smore/matrix.hpp"
#include "smore/numerics.hpp"
#include "smore/rng.hpp"

namespace smore {

// Two-level perceptron w2 * tanh(w1 * u + b1) + b2. Used for the router query
// networks, the bottom-up score networks and the mlp activation.
struct Perceptron {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  bool empty() const { return w1.empty() && w2.empty(); }
};

Vector perceptron_forward(const Perceptron& p, const Vector& u, Vector* hidden_pre = nullptr);

// All learnable tensors of one adapter. For the shared variant the expert
// matrices are stored once and indexed through the *_at accessors; everything
// else is per layer.
struct ExpertBank {
  ArchitectureSpec spec;
  DimensionSchedule dims;

  // [param_layer][expert]
  std::vector<std::vector<Matrix>> down;  // A: r_l x d
  std::vector<std::vector<Matrix>> up;    // B: d_{l+1} x r_l
  std::vector<std::vector<Vector>> bias;  // b: d_{l+1}; allocated only when enabled

  std::vector<Matrix> mixer;  // W_l: d_{l+1} x d_l; mixer[0] is d_1 x 0
  Matrix proj;                // d_out x d_L
  std::vector<Perceptron> sigma_mlp;  // per layer, only when activation == mlp

  // top-down router
  Matrix token_down;                // d_down x d
  std::vector<Matrix> keys;         // s_l x m per layer
  std::vector<Matrix> noise_keys;   // s_l x m per layer, only for noisy-topk
  std::vector<Perceptron> query;    // per layer; input d_down + (L-1-l)*m

  // bottom-up router (only when spec.bottom_up)
  std::vector<Matrix> bu_keys;          // l==0: (F_1*s_0) x d_down, l>=1: F_l x d_down
  std::vector<Perceptron> bu_score;     // l>=1: (d_l + d_down) -> s_l, hidden m

  int param_layers() const { return spec.variant == Variant::smore_shared ? 1 : spec.depth; }
  int shared_index(int layer) const { return spec.variant == Variant::smore_shared ? 0 : layer; }
  const Matrix& down_at(int layer, int expert) const { return down[shared_index(layer)][expert]; }
  const Matrix& up_at(int layer, int expert) const { return up[shared_index(layer)][expert]; }
  const Vector& bias_at(int layer, int expert) const { return bias[shared_index(layer)][expert]; }
  Matrix& down_at(int layer, int expert) { return down[shared_index(layer)][expert]; }
  Matrix& up_at(int layer, int expert) { return up[shared_index(layer)][expert]; }
  Vector& bias_at(int layer, int expert) { return bias[shared_index(layer)][expert]; }
  int sigma_hidden(int layer) const {
    return spec.mlp_hidden > 0 ? spec.mlp_hidden : dims.at(layer + 1);
  }
};

// Fresh bank: down projections uniform-scaled, up projections zero (the
// adapter starts as an exact no-op), mixers and final projection uniform-
// scaled, router keys normal-scaled, biases zero.
ExpertBank init_bank(const ArchitectureSpec& spec, RngState& rng);

// Zero tensors with the same shapes; the container for gradients.
ExpertBank zero_like(const ExpertBank& bank);

// Single-layer baselines. Order l expert i holds a (down: r_l x d,
// up: d_out x r_l) pair; a one-order instance is a MoLRE.
struct BaselineParams {
  int base_dim = 0;
  int output_dim = 0;
  std::vector<int> expert_counts;
  std::vector<int> ranks;
  // [order][expert] -> (down, up)
  std::vector<std::vector<std::pair<Matrix, Matrix>>> experts;

  int orders() const { return static_cast<int>(experts.size()); }
  bool is_molre() const { return orders() == 1; }
};

BaselineParams random_baseline(int d, int d_out, const std::vector<int>& expert_counts,
                               const std::vector<int>& ranks, RngState& rng);

// Binary block matrix [0; I] that embeds R^b into the last b coordinates of
// R^a. Composition satisfies embed(a,b)*embed(b,c) == embed(a,c).
Matrix projection_embed(int a, int b);

// Exact-expressiveness constructions: banks whose forward pass reproduces the
// baseline output for matching gate weights (identity activation).
ExpertBank construct_equivalent_molre(const BaselineParams& base, RngState& rng);
ExpertBank construct_equivalent_momor(const BaselineParams& base, RngState& rng);

// Parameters that make the forward output a function of the routing tree's
// isomorphism class only: expert matrices zeroed, biases encode the expert
// index, mixers stack the child embedding under the bias block, and the mlp
// activation is a fixed random perceptron acting as an injective set encoder.
ExpertBank construct_distinctness_params(const ArchitectureSpec& spec, RngState& rng);

// Flat parameter vector in a fixed documented order (see tensor_list in
// experts.cpp). include_router=false drops the routing tensors, leaving
// exactly the expert/mixer/projection (+bias/sigma) parameters.
Vector flatten_params(const ExpertBank& bank, bool include_router = true);
void unflatten_params(ExpertBank& bank, const Vector& theta, bool include_router = true);
std::size_t param_vector_size(const ExpertBank& bank, bool include_router = true);

// dst += alpha * src over every tensor (same shapes required).
void bank_axpy(ExpertBank& dst, double alpha, const ExpertBank& src);
double bank_norm2(const ExpertBank& bank);

// Serialization: <prefix>.json shape manifest + <prefix>.bin little-endian
// doubles; round-trips bit-exactly.
void save_bank(const ExpertBank& bank, const std::string& prefix);
ExpertBank load_bank(const std::string& prefix);

}  // namespace smore
