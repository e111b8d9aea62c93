#pragma once

#include <string>
#include <vector>

#include "smore/experts.hpp"
#include "smore/matrix.hpp"

namespace smore {

enum class RouteMode { train, eval };

// One activated node. A node is identified by its ancestral path (the expert
// indices from the top layer down to it), never by the expert index alone:
// the same expert can be activated by several parents.
struct TreeNode {
  int expert = 0;
  double weight = 1.0;  // gate weight alpha assigned by the parent's selection
  std::vector<TreeNode> children;
};

struct RoutingTree {
  int depth = 0;                // L; roots hold experts of the top layer pool
  std::vector<TreeNode> roots;
};

// Sorts every child list by expert index (the canonical order used by the
// forward pass; summation in this order makes outputs independent of how the
// tree was assembled).
void normalize_tree(RoutingTree& tree);
// Nodes per pool level, index l in [0, depth).
std::vector<long long> level_counts(const RoutingTree& tree);
// Structural checks: expert ranges, sibling distinctness, path depth.
void check_tree(const RoutingTree& tree, const ArchitectureSpec& spec);
std::string tree_to_json(const RoutingTree& tree);
RoutingTree tree_from_json(const std::string& text);

// Per-pool routing statistics; mergeable across tokens (elementwise sums).
struct PoolStats {
  Vector importance;  // sum of applied gate weights per expert
  Vector load;        // selection counts per expert
  Vector prob_sum;    // sum of full-pool probabilities per expert (switch)
  long long events = 0;
  long long tokens = 0;
};

struct GateStats {
  GateType gate = GateType::dense;
  std::vector<PoolStats> pools;

  void merge(const GateStats& other);
};

struct GateSelection {
  std::vector<int> indices;  // ascending expert order
  Vector weights;            // aligned with indices
  Vector probs_full;         // full-pool probabilities (zeros off-support for top-k)
  Vector perturbed;          // scores actually ranked (noise added in train mode)
  Vector noise_eps;          // standard-normal draws (noisy-topk train mode)
};

// Dense: all experts, softmax weights. Noisy top-k: optionally perturbed
// scores, top-f survivors, softmax over the survivors. Switch: softmax over
// the full pool, top-f kept with their raw probabilities. Ties break toward
// the lowest expert index.
GateSelection gate_select(const Vector& scores, GateType gate, int fanout, RngState& rng,
                          RouteMode mode, const Vector& noise_scores = {});

// Everything the backward pass needs to differentiate one selection.
struct SelectionEvent {
  int pool = 0;
  std::vector<int> parent_path;  // experts from the top pool down to the parent
  Vector input;                  // query-net input (after jitter, if any)
  Vector jitter;                 // multiplicative jitter draws (switch, train)
  Vector hidden_pre;             // query-net hidden pre-activation
  Vector query;
  Vector scores;
  Vector noise_scores;
  GateSelection sel;
};

struct RoutingTrace {
  Vector x_down;
  std::vector<SelectionEvent> events;
  bool differentiable = true;  // false for bottom-up routing
};

struct RouteResult {
  RoutingTree tree;
  GateStats stats;
  RoutingTrace trace;
};

// Top-down routing: the top pool is scored from the down-projected token
// alone; each deeper selection is conditioned on the concatenation of the
// down-projected token and the activated ancestors' key vectors.
RouteResult route_topdown(const Vector& x, const ExpertBank& bank, RngState& rng, RouteMode mode);

// Bottom-up routing (optional alternative): layer-1 children are chosen by
// position-key scores against the down-projected token; each higher layer is
// chosen from the concatenation of the aggregated child embedding and the
// position key. Selection and weights are not differentiated. Defined in
// propagate.cpp because it interleaves routing with aggregation.
RouteResult route_bottomup(const Vector& x, const ExpertBank& bank, RngState& rng, RouteMode mode);

// Total auxiliary load-balance loss: noisy top-k pools contribute the squared
// coefficient of variation of importance plus the same for load; switch pools
// contribute s * sum_i (fraction routed to i) * (mean probability of i).
double aux_losses(const GateStats& stats, double gamma);

// Gradient of the auxiliary loss w.r.t. per-event quantities (gamma folded
// in). d_importance feeds the applied gate weights of selected experts;
// d_prob feeds the full-pool probabilities of every switch selection event.
struct AuxGrad {
  std::vector<Vector> d_importance;
  std::vector<Vector> d_prob;
};
AuxGrad aux_loss_gradient(const GateStats& stats, double gamma);

// Multiplicative jitter half-width for the switch gate in train mode.
inline constexpr double kSwitchJitterEps = 0.01;

}  // namespace smore
