#pragma once

#include <optional>
#include <vector>

#include "smore/experts.hpp"
#include "smore/router.hpp"

namespace smore {

// Everything retained from one forward pass: per-node embeddings and
// pre-activations (nodes are ancestral paths), the final embedding and output,
// plus the routing internals when the tree came from a router.
struct NodeTrace {
  std::vector<int> path;   // expert indices from the top pool down to this node
  int pool = 0;            // layer of this node's expert
  double weight = 1.0;     // alpha as applied (1 in theory mode)
  Vector rank_vec;         // A x
  Vector own;              // aggregated child embedding x_l (length d_l)
  Vector pre;              // pre-activation z (length d_{l+1})
  Vector sigma_hidden_pre; // mlp activation hidden pre-activation
  Vector out;              // contribution consumed by the parent (length d_{l+1})
  std::vector<std::size_t> child_trace;
};

struct ForwardTrace {
  ArchitectureSpec spec;
  Vector input;
  RoutingTree tree;
  bool theory_mode = false;
  std::vector<NodeTrace> nodes;   // postorder: children precede parents
  std::vector<std::size_t> root_trace;
  Vector x_final;                 // x_L
  Vector output;                  // x'
  std::optional<RoutingTrace> routing;
};

// Layer aggregation: each child contributes alpha * sigma(B A x + W x_child + b),
// the final embedding is projected to the output dimension. theory_mode
// replaces every gate weight with 1 (binary activation mask).
std::pair<Vector, ForwardTrace> forward_smore(const Vector& x, const RoutingTree& tree,
                                              const ExpertBank& bank, bool theory_mode = false);

// Variant with the nonlinearity applied to the propagated child embedding
// only: contributions are alpha * (B A x + W sigma(x_child) + b).
std::pair<Vector, ForwardTrace> forward_smore_star(const Vector& x, const RoutingTree& tree,
                                                   const ExpertBank& bank, bool theory_mode = false);

// Dispatch on bank.spec.variant (shared uses the smore path with cached
// expert products; molre/momor specs evaluate as plain layer aggregation).
std::pair<Vector, ForwardTrace> forward(const Vector& x, const RoutingTree& tree,
                                        const ExpertBank& bank, bool theory_mode = false);

// Convenience: routes with the bank's router, then runs the variant forward.
// The returned trace carries the routing internals for backward.
std::pair<Vector, ForwardTrace> route_and_forward(const Vector& x, const ExpertBank& bank,
                                                  RngState& rng, RouteMode mode,
                                                  GateStats* stats_out = nullptr);

// Flat single-layer baselines.
Vector forward_molre(const Vector& x, const std::vector<std::pair<int, double>>& selection,
                     const BaselineParams& base);
// alpha[order][expert] are the aggregated gate coefficients.
Vector forward_momor(const Vector& x, const std::vector<Vector>& alpha,
                     const BaselineParams& base);

// Collapse an identity-activation, bias-free adapter on a fixed tree into the
// flat multi-order form: weights (prod of mixers above) * B paired with A,
// plus per-expert coefficients summed over every path that ends at the
// expert. forward_momor on the result reproduces forward_smore exactly.
struct CollapsedModel {
  BaselineParams params;
  std::vector<Vector> alpha_hat;  // [order][expert]
};
CollapsedModel collapse_to_single_layer(const ExpertBank& bank, const RoutingTree& tree);

// Exact reverse-mode gradients for every tensor in the bank. Gate weights of
// selected experts are differentiated through the router when the trace
// carries routing internals (the discrete top-f selection itself gets no
// gradient); aux supplies the load-balance loss terms.
ExpertBank backward(const ForwardTrace& trace, const Vector& grad_out, const ExpertBank& bank,
                    const AuxGrad* aux = nullptr);

std::string trace_to_json(const ForwardTrace& trace, bool full_precision = false,
                          std::size_t max_values = 8);

}  // namespace smore
