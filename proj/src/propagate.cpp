#include "smore/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "smore/kernels.hpp"
#include "smore/numerics.hpp"

namespace smore {

namespace {

bool is_star(const ArchitectureSpec& spec) { return spec.variant == Variant::smore_star; }

void apply_activation_inplace(Activation act, Vector& v) {
  if (act == Activation::relu)
    for (double& x : v) x = relu(x);
}

struct ForwardEngine {
  const ExpertBank& bank;
  const Vector& x;
  bool theory = false;
  bool star = false;
  ForwardTrace& trace;
  // shared variant: B^i A^i x computed once per distinct expert
  std::map<int, std::pair<Vector, Vector>> shared_cache;

  std::pair<Vector, Vector> expert_product(int pool, int expert) {
    if (bank.spec.variant == Variant::smore_shared) {
      auto it = shared_cache.find(expert);
      if (it != shared_cache.end()) return it->second;
    }
    Vector rank = matvec(bank.down_at(pool, expert), x);
    Vector bax = matvec(bank.up_at(pool, expert), rank);
    if (bank.spec.variant == Variant::smore_shared) shared_cache.emplace(expert, std::make_pair(rank, bax));
    return {rank, bax};
  }

  std::size_t eval(const TreeNode& node, int pool, std::vector<int>& path) {
    path.push_back(node.expert);
    NodeTrace nt;
    nt.path = path;
    nt.pool = pool;
    nt.weight = theory ? 1.0 : node.weight;
    nt.own.assign(static_cast<std::size_t>(bank.dims.at(pool)), 0.0);
    for (const auto& child : node.children) {
      const std::size_t ci = eval(child, pool - 1, path);
      nt.child_trace.push_back(ci);
      axpy(nt.own, trace.nodes[ci].weight, trace.nodes[ci].out);
    }

    auto [rank, bax] = expert_product(pool, node.expert);
    nt.rank_vec = std::move(rank);
    const Matrix& mixer = bank.mixer[static_cast<std::size_t>(pool)];
    if (star) {
      nt.pre = std::move(bax);
      if (pool > 0) {
        Vector own_act = nt.own;
        apply_activation_inplace(bank.spec.activation, own_act);
        Vector mixed = matvec(mixer, own_act);
        axpy(nt.pre, 1.0, mixed);
      }
      if (bank.spec.bias_enabled) axpy(nt.pre, 1.0, bank.bias_at(pool, node.expert));
      nt.out = nt.pre;
    } else {
      nt.pre = std::move(bax);
      if (pool > 0) {
        Vector mixed = matvec(mixer, nt.own);
        axpy(nt.pre, 1.0, mixed);
      }
      if (bank.spec.bias_enabled) axpy(nt.pre, 1.0, bank.bias_at(pool, node.expert));
      switch (bank.spec.activation) {
        case Activation::identity:
          nt.out = nt.pre;
          break;
        case Activation::relu:
          nt.out = nt.pre;
          apply_activation_inplace(Activation::relu, nt.out);
          break;
        case Activation::mlp:
          nt.out = perceptron_forward(bank.sigma_mlp[static_cast<std::size_t>(pool)], nt.pre,
                                      &nt.sigma_hidden_pre);
          break;
      }
    }
    path.pop_back();
    trace.nodes.push_back(std::move(nt));
    return trace.nodes.size() - 1;
  }
};

std::pair<Vector, ForwardTrace> run_forward(const Vector& x, const RoutingTree& tree,
                                            const ExpertBank& bank, bool theory_mode, bool star) {
  const ArchitectureSpec& spec = bank.spec;
  if (static_cast<int>(x.size()) != spec.base_dim)
    throw std::invalid_argument("forward: token length does not match base_dim");
  if (star && spec.activation == Activation::mlp)
    throw std::invalid_argument("forward: the star variant supports identity/relu activations only");
  check_tree(tree, spec);

  ForwardTrace trace;
  trace.spec = spec;
  trace.input = x;
  trace.tree = tree;
  normalize_tree(trace.tree);
  trace.theory_mode = theory_mode;

  ForwardEngine engine{bank, x, theory_mode, star, trace, {}};
  std::vector<int> path;
  trace.x_final.assign(static_cast<std::size_t>(bank.dims.inner_dim()), 0.0);
  for (const auto& root : trace.tree.roots) {
    const std::size_t ri = engine.eval(root, spec.depth - 1, path);
    trace.root_trace.push_back(ri);
    axpy(trace.x_final, trace.nodes[ri].weight, trace.nodes[ri].out);
  }
  trace.output = matvec(bank.proj, trace.x_final);
  Vector out = trace.output;
  return {std::move(out), std::move(trace)};
}

}  // namespace

std::pair<Vector, ForwardTrace> forward_smore(const Vector& x, const RoutingTree& tree,
                                              const ExpertBank& bank, bool theory_mode) {
  return run_forward(x, tree, bank, theory_mode, false);
}

std::pair<Vector, ForwardTrace> forward_smore_star(const Vector& x, const RoutingTree& tree,
                                                   const ExpertBank& bank, bool theory_mode) {
  return run_forward(x, tree, bank, theory_mode, true);
}

std::pair<Vector, ForwardTrace> forward(const Vector& x, const RoutingTree& tree,
                                        const ExpertBank& bank, bool theory_mode) {
  return run_forward(x, tree, bank, theory_mode, is_star(bank.spec));
}

std::pair<Vector, ForwardTrace> route_and_forward(const Vector& x, const ExpertBank& bank,
                                                  RngState& rng, RouteMode mode,
                                                  GateStats* stats_out) {
  RouteResult route = bank.spec.bottom_up ? route_bottomup(x, bank, rng, mode)
                                          : route_topdown(x, bank, rng, mode);
  auto [out, trace] = forward(x, route.tree, bank, false);
  trace.routing = std::move(route.trace);
  if (stats_out) *stats_out = std::move(route.stats);
  return {std::move(out), std::move(trace)};
}

Vector forward_molre(const Vector& x, const std::vector<std::pair<int, double>>& selection,
                     const BaselineParams& base) {
  if (!base.is_molre()) throw std::invalid_argument("forward_molre: baseline has multiple orders");
  Vector out(static_cast<std::size_t>(base.output_dim), 0.0);
  for (const auto& [i, alpha] : selection) {
    const auto& [down, up] = base.experts[0].at(static_cast<std::size_t>(i));
    Vector t = matvec(up, matvec(down, x));
    axpy(out, alpha, t);
  }
  return out;
}

Vector forward_momor(const Vector& x, const std::vector<Vector>& alpha,
                     const BaselineParams& base) {
  if (static_cast<int>(alpha.size()) != base.orders())
    throw std::invalid_argument("forward_momor: coefficient orders mismatch");
  Vector out(static_cast<std::size_t>(base.output_dim), 0.0);
  for (int l = 0; l < base.orders(); ++l) {
    const auto& coeffs = alpha[static_cast<std::size_t>(l)];
    if (coeffs.size() != base.experts[static_cast<std::size_t>(l)].size())
      throw std::invalid_argument("forward_momor: coefficient length mismatch");
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
      if (coeffs[i] == 0.0) continue;
      const auto& [down, up] = base.experts[static_cast<std::size_t>(l)][i];
      Vector t = matvec(up, matvec(down, x));
      axpy(out, coeffs[i], t);
    }
  }
  return out;
}

CollapsedModel collapse_to_single_layer(const ExpertBank& bank, const RoutingTree& tree) {
  const ArchitectureSpec& spec = bank.spec;
  if (spec.activation != Activation::identity)
    throw std::invalid_argument("collapse defined only for identity activation");
  if (spec.bias_enabled)
    throw std::invalid_argument("collapse defined only for bias-free banks");
  check_tree(tree, spec);

  const int L = spec.depth;
  // cum[l] = proj * W_{L-1} * ... * W_{l+1}
  std::vector<Matrix> cum(static_cast<std::size_t>(L));
  cum[static_cast<std::size_t>(L - 1)] = bank.proj;
  for (int l = L - 2; l >= 0; --l)
    cum[static_cast<std::size_t>(l)] =
        matmul(cum[static_cast<std::size_t>(l + 1)], bank.mixer[static_cast<std::size_t>(l + 1)]);

  CollapsedModel model;
  model.params.base_dim = spec.base_dim;
  model.params.output_dim = spec.output_dim;
  model.params.expert_counts = spec.expert_counts;
  model.params.ranks = spec.ranks;
  model.params.experts.resize(static_cast<std::size_t>(L));
  model.alpha_hat.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    const int s = spec.expert_counts[static_cast<std::size_t>(l)];
    model.alpha_hat[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(s), 0.0);
    for (int i = 0; i < s; ++i) {
      model.params.experts[static_cast<std::size_t>(l)].emplace_back(
          bank.down_at(l, i), matmul(cum[static_cast<std::size_t>(l)], bank.up_at(l, i)));
    }
  }

  // alpha_hat sums the product of gate weights along every path ending at the
  // expert (the same expert can be reached through several parents).
  auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes, int pool, double prefix) -> void {
    for (const auto& n : nodes) {
      const double pi = prefix * n.weight;
      model.alpha_hat[static_cast<std::size_t>(pool)][static_cast<std::size_t>(n.expert)] += pi;
      self(self, n.children, pool - 1, pi);
    }
  };
  walk(walk, tree.roots, L - 1, 1.0);
  return model;
}

namespace {

void perceptron_backward(const Perceptron& p, Perceptron& g, const Vector& input,
                         const Vector& hidden_pre, const Vector& g_out, Vector& g_input) {
  axpy(g.b2, 1.0, g_out);
  Vector t(hidden_pre.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::tanh(hidden_pre[i]);
  add_outer(g.w2, g_out, t);
  Vector g_t = matvec_t(p.w2, g_out);
  Vector g_h(g_t.size());
  for (std::size_t i = 0; i < g_h.size(); ++i) g_h[i] = (1.0 - t[i] * t[i]) * g_t[i];
  axpy(g.b1, 1.0, g_h);
  add_outer(g.w1, g_h, input);
  g_input = matvec_t(p.w1, g_h);
}

void router_backward(const RoutingTrace& routing, const ExpertBank& bank, ExpertBank& grads,
                     const std::map<std::vector<int>, double>& g_alpha, const AuxGrad* aux,
                     const Vector& x_input) {
  Vector g_x_down(routing.x_down.size(), 0.0);
  for (const auto& ev : routing.events) {
    const std::size_t l = static_cast<std::size_t>(ev.pool);
    const std::size_t s = ev.scores.size();

    Vector g_w(ev.sel.indices.size(), 0.0);
    for (std::size_t k = 0; k < ev.sel.indices.size(); ++k) {
      std::vector<int> path = ev.parent_path;
      path.push_back(ev.sel.indices[k]);
      if (auto it = g_alpha.find(path); it != g_alpha.end()) g_w[k] = it->second;
      if (aux) g_w[k] += aux->d_importance[l][static_cast<std::size_t>(ev.sel.indices[k])];
    }

    Vector g_scores(s, 0.0);
    Vector g_noise(s, 0.0);
    switch (bank.spec.gate) {
      case GateType::dense: {
        g_scores = softmax_backward(ev.sel.probs_full, g_w);
        break;
      }
      case GateType::noisy_topk: {
        const Vector g_h = softmax_backward(ev.sel.weights, g_w);
        for (std::size_t k = 0; k < ev.sel.indices.size(); ++k) {
          const std::size_t i = static_cast<std::size_t>(ev.sel.indices[k]);
          g_scores[i] = g_h[k];
          if (!ev.sel.noise_eps.empty())
            g_noise[i] = g_h[k] * ev.sel.noise_eps[i] * sigmoid(ev.noise_scores[i]);
        }
        break;
      }
      case GateType::switch_gate: {
        Vector g_p(s, 0.0);
        for (std::size_t k = 0; k < ev.sel.indices.size(); ++k)
          g_p[static_cast<std::size_t>(ev.sel.indices[k])] = g_w[k];
        if (aux) axpy(g_p, 1.0, aux->d_prob[l]);
        g_scores = softmax_backward(ev.sel.probs_full, g_p);
        break;
      }
    }

    if (ev.query.empty()) continue;  // degenerate router dims: nothing to differentiate

    const Matrix& keys = bank.keys[l];
    Vector g_q(ev.query.size(), 0.0);
    for (std::size_t i = 0; i < s; ++i) {
      if (g_scores[i] != 0.0) {
        kernels::active().axpy(keys.cols, g_scores[i], keys.row(i), g_q.data());
        kernels::active().axpy(keys.cols, g_scores[i], ev.query.data(), grads.keys[l].row(i));
      }
    }
    if (!ev.noise_scores.empty()) {
      const Matrix& nk = bank.noise_keys[l];
      for (std::size_t i = 0; i < s; ++i) {
        if (g_noise[i] != 0.0) {
          kernels::active().axpy(nk.cols, g_noise[i], nk.row(i), g_q.data());
          kernels::active().axpy(nk.cols, g_noise[i], ev.query.data(), grads.noise_keys[l].row(i));
        }
      }
    }

    Vector g_u;
    perceptron_backward(bank.query[l], grads.query[l], ev.input, ev.hidden_pre, g_q, g_u);
    if (!ev.jitter.empty())
      for (std::size_t i = 0; i < g_u.size(); ++i) g_u[i] *= ev.jitter[i];

    const std::size_t dd = routing.x_down.size();
    for (std::size_t i = 0; i < dd; ++i) g_x_down[i] += g_u[i];
    std::size_t offset = dd;
    const std::size_t m = static_cast<std::size_t>(bank.spec.router_key_dim);
    for (std::size_t j = 0; j < ev.parent_path.size(); ++j) {
      // segments follow the forward order: immediate parent first
      const std::size_t anc_layer = l + 1 + j;
      const int anc_expert = ev.parent_path[ev.parent_path.size() - 1 - j];
      kernels::active().axpy(m, 1.0, g_u.data() + offset,
                             grads.keys[anc_layer].row(static_cast<std::size_t>(anc_expert)));
      offset += m;
    }
  }
  add_outer(grads.token_down, g_x_down, x_input);
}

}  // namespace

ExpertBank backward(const ForwardTrace& trace, const Vector& grad_out, const ExpertBank& bank,
                    const AuxGrad* aux) {
  if (spec_to_json_text(trace.spec) != spec_to_json_text(bank.spec))
    throw std::invalid_argument("backward: stale trace (spec does not match the bank)");
  if (grad_out.size() != static_cast<std::size_t>(bank.spec.output_dim))
    throw std::invalid_argument("backward: grad_out length mismatch");
  if (trace.x_final.size() != static_cast<std::size_t>(bank.dims.inner_dim()))
    throw std::invalid_argument("backward: stale trace (schedule mismatch)");

  const bool star = is_star(bank.spec);
  ExpertBank grads = zero_like(bank);

  add_outer(grads.proj, grad_out, trace.x_final);
  const Vector g_x_final = matvec_t(bank.proj, grad_out);

  std::vector<Vector> g_out(trace.nodes.size());
  std::map<std::vector<int>, double> g_alpha;

  for (const std::size_t ri : trace.root_trace) {
    const NodeTrace& nt = trace.nodes[ri];
    g_out[ri].assign(nt.out.size(), 0.0);
    axpy(g_out[ri], nt.weight, g_x_final);
    g_alpha[nt.path] = dot(nt.out, g_x_final);
  }

  // postorder guarantees children precede parents, so the reverse pass visits
  // every parent before its children
  for (std::size_t idx = trace.nodes.size(); idx-- > 0;) {
    const NodeTrace& nt = trace.nodes[idx];
    if (g_out[idx].empty()) g_out[idx].assign(nt.out.size(), 0.0);
    const Vector& g = g_out[idx];
    const int pool = nt.pool;
    const std::size_t pl = static_cast<std::size_t>(bank.shared_index(pool));
    const std::size_t e = static_cast<std::size_t>(nt.path.back());

    Vector g_own;
    if (star) {
      add_outer(grads.up[pl][e], g, nt.rank_vec);
      Vector g_rank = matvec_t(bank.up_at(pool, static_cast<int>(e)), g);
      add_outer(grads.down[pl][e], g_rank, trace.input);
      if (bank.spec.bias_enabled) axpy(grads.bias[pl][e], 1.0, g);
      if (pool > 0) {
        Vector own_act = nt.own;
        apply_activation_inplace(bank.spec.activation, own_act);
        add_outer(grads.mixer[static_cast<std::size_t>(pool)], g, own_act);
        Vector g_act = matvec_t(bank.mixer[static_cast<std::size_t>(pool)], g);
        g_own = std::move(g_act);
        if (bank.spec.activation == Activation::relu)
          for (std::size_t i = 0; i < g_own.size(); ++i) g_own[i] *= relu_grad(nt.own[i]);
      }
    } else {
      Vector g_z;
      switch (bank.spec.activation) {
        case Activation::identity:
          g_z = g;
          break;
        case Activation::relu: {
          g_z.resize(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) g_z[i] = relu_grad(nt.pre[i]) * g[i];
          break;
        }
        case Activation::mlp: {
          perceptron_backward(bank.sigma_mlp[static_cast<std::size_t>(pool)],
                              grads.sigma_mlp[static_cast<std::size_t>(pool)], nt.pre,
                              nt.sigma_hidden_pre, g, g_z);
          break;
        }
      }
      add_outer(grads.up[pl][e], g_z, nt.rank_vec);
      Vector g_rank = matvec_t(bank.up_at(pool, static_cast<int>(e)), g_z);
      add_outer(grads.down[pl][e], g_rank, trace.input);
      if (bank.spec.bias_enabled) axpy(grads.bias[pl][e], 1.0, g_z);
      if (pool > 0) {
        add_outer(grads.mixer[static_cast<std::size_t>(pool)], g_z, nt.own);
        g_own = matvec_t(bank.mixer[static_cast<std::size_t>(pool)], g_z);
      }
    }

    if (!g_own.empty()) {
      for (const std::size_t ci : nt.child_trace) {
        const NodeTrace& ct = trace.nodes[ci];
        g_out[ci].assign(ct.out.size(), 0.0);
        axpy(g_out[ci], ct.weight, g_own);
        g_alpha[ct.path] = dot(ct.out, g_own);
      }
    }
  }

  if (!trace.theory_mode && trace.routing && trace.routing->differentiable)
    router_backward(*trace.routing, bank, grads, g_alpha, aux, trace.input);

  return grads;
}

// ---------------------------------------------------------------------------
// Bottom-up routing. Lives here because selection at layer l+1 consumes the
// aggregated embeddings of the already-built level-l subtrees.
// ---------------------------------------------------------------------------

namespace {

Vector subtree_contribution(const ExpertBank& bank, const Vector& x, const TreeNode& node,
                            int pool) {
  Vector own(static_cast<std::size_t>(bank.dims.at(pool)), 0.0);
  for (const auto& child : node.children)
    axpy(own, child.weight, subtree_contribution(bank, x, child, pool - 1));
  Vector rank = matvec(bank.down_at(pool, node.expert), x);
  Vector out = matvec(bank.up_at(pool, node.expert), rank);
  if (is_star(bank.spec)) {
    if (pool > 0) {
      apply_activation_inplace(bank.spec.activation, own);
      axpy(out, 1.0, matvec(bank.mixer[static_cast<std::size_t>(pool)], own));
    }
    if (bank.spec.bias_enabled) axpy(out, 1.0, bank.bias_at(pool, node.expert));
    return out;
  }
  if (pool > 0) axpy(out, 1.0, matvec(bank.mixer[static_cast<std::size_t>(pool)], own));
  if (bank.spec.bias_enabled) axpy(out, 1.0, bank.bias_at(pool, node.expert));
  if (bank.spec.activation == Activation::relu) {
    apply_activation_inplace(Activation::relu, out);
  } else if (bank.spec.activation == Activation::mlp) {
    out = perceptron_forward(bank.sigma_mlp[static_cast<std::size_t>(pool)], out);
  }
  return out;
}

Vector aggregate_positions(const ExpertBank& bank, const Vector& x,
                           const std::vector<TreeNode>& children, int child_pool) {
  Vector own(static_cast<std::size_t>(bank.dims.at(child_pool + 1)), 0.0);
  for (const auto& c : children) axpy(own, c.weight, subtree_contribution(bank, x, c, child_pool));
  return own;
}

}  // namespace

RouteResult route_bottomup(const Vector& x, const ExpertBank& bank, RngState& rng, RouteMode mode) {
  const ArchitectureSpec& spec = bank.spec;
  if (!spec.bottom_up)
    throw std::invalid_argument("route_bottomup: spec is not flagged for bottom-up routing");
  if (spec.gate == GateType::dense)
    throw std::invalid_argument("route_bottomup: unsupported with the dense gate");
  if (static_cast<int>(x.size()) != spec.base_dim)
    throw std::invalid_argument("route_bottomup: token length does not match base_dim");
  (void)mode;  // no trained noise or jitter in the bottom-up variant

  RouteResult result;
  result.tree.depth = spec.depth;
  result.stats.gate = spec.gate;
  result.stats.pools.resize(static_cast<std::size_t>(spec.depth));
  for (int l = 0; l < spec.depth; ++l) {
    auto& p = result.stats.pools[static_cast<std::size_t>(l)];
    const std::size_t s = static_cast<std::size_t>(spec.expert_counts[static_cast<std::size_t>(l)]);
    p.importance.assign(s, 0.0);
    p.load.assign(s, 0.0);
    p.prob_sum.assign(s, 0.0);
    p.tokens = 1;
  }
  result.trace.x_down = matvec(bank.token_down, x);
  result.trace.differentiable = false;

  const int L = spec.depth;
  const int s0 = spec.expert_counts[0];
  const long long parents0 = total_fanout(spec, 1);

  // level 0: per parent position, score every candidate against x_down
  std::vector<std::vector<TreeNode>> groups;  // children bundle per position of pool 1
  for (long long p = 0; p < parents0; ++p) {
    SelectionEvent ev;
    ev.pool = 0;
    ev.scores.assign(static_cast<std::size_t>(s0), 0.0);
    const Matrix& k0 = bank.bu_keys[0];
    for (int i = 0; i < s0; ++i)
      ev.scores[static_cast<std::size_t>(i)] =
          k0.cols ? kernels::active().dot(k0.cols, k0.row(static_cast<std::size_t>(p * s0 + i)),
                                          result.trace.x_down.data())
                  : 0.0;
    ev.sel = gate_select(ev.scores, spec.gate, spec.fanouts[0], rng, RouteMode::eval);
    auto& pool_stats = result.stats.pools[0];
    for (std::size_t k = 0; k < ev.sel.indices.size(); ++k) {
      pool_stats.importance[static_cast<std::size_t>(ev.sel.indices[k])] += ev.sel.weights[k];
      pool_stats.load[static_cast<std::size_t>(ev.sel.indices[k])] += 1.0;
    }
    if (!ev.sel.probs_full.empty()) axpy(pool_stats.prob_sum, 1.0, ev.sel.probs_full);
    pool_stats.events += 1;
    std::vector<TreeNode> bundle;
    for (std::size_t k = 0; k < ev.sel.indices.size(); ++k)
      bundle.push_back(TreeNode{ev.sel.indices[k], ev.sel.weights[k], {}});
    groups.push_back(std::move(bundle));
    result.trace.events.push_back(std::move(ev));
  }

  // higher levels: positions grouped by parent, group scores averaged over the
  // members' score networks, experts assigned to members by descending score
  for (int l = 1; l < L; ++l) {
    const int s = spec.expert_counts[static_cast<std::size_t>(l)];
    const int f = spec.fanouts[static_cast<std::size_t>(l)];
    const long long positions = total_fanout(spec, l);
    const long long parent_groups = total_fanout(spec, l + 1);

    std::vector<Vector> pos_scores(static_cast<std::size_t>(positions));
    std::vector<Vector> pos_embed(static_cast<std::size_t>(positions));
    for (long long p = 0; p < positions; ++p) {
      pos_embed[static_cast<std::size_t>(p)] =
          aggregate_positions(bank, x, groups[static_cast<std::size_t>(p)], l - 1);
      Vector u = pos_embed[static_cast<std::size_t>(p)];
      const Matrix& kl = bank.bu_keys[static_cast<std::size_t>(l)];
      if (kl.cols) u.insert(u.end(), kl.row(static_cast<std::size_t>(p)), kl.row(static_cast<std::size_t>(p)) + kl.cols);
      pos_scores[static_cast<std::size_t>(p)] =
          perceptron_forward(bank.bu_score[static_cast<std::size_t>(l)], u);
    }

    std::vector<std::vector<TreeNode>> next_groups;
    for (long long g = 0; g < parent_groups; ++g) {
      Vector group_scores(static_cast<std::size_t>(s), 0.0);
      for (int c = 0; c < f; ++c)
        axpy(group_scores, 1.0 / f, pos_scores[static_cast<std::size_t>(g * f + c)]);
      SelectionEvent ev;
      ev.pool = l;
      ev.scores = group_scores;
      ev.sel = gate_select(group_scores, spec.gate, f, rng, RouteMode::eval);
      auto& pool_stats = result.stats.pools[static_cast<std::size_t>(l)];
      for (std::size_t k = 0; k < ev.sel.indices.size(); ++k) {
        pool_stats.importance[static_cast<std::size_t>(ev.sel.indices[k])] += ev.sel.weights[k];
        pool_stats.load[static_cast<std::size_t>(ev.sel.indices[k])] += 1.0;
      }
      if (!ev.sel.probs_full.empty()) axpy(pool_stats.prob_sum, 1.0, ev.sel.probs_full);
      pool_stats.events += 1;

      // order selected experts by descending score, assign to member positions
      std::vector<std::size_t> order(ev.sel.indices.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = group_scores[static_cast<std::size_t>(ev.sel.indices[a])];
        const double sb = group_scores[static_cast<std::size_t>(ev.sel.indices[b])];
        if (sa != sb) return sa > sb;
        return ev.sel.indices[a] < ev.sel.indices[b];
      });
      std::vector<TreeNode> bundle;
      for (int c = 0; c < f; ++c) {
        const std::size_t k = order[static_cast<std::size_t>(c)];
        TreeNode node{ev.sel.indices[k], ev.sel.weights[k], {}};
        node.children = std::move(groups[static_cast<std::size_t>(g * f + c)]);
        bundle.push_back(std::move(node));
      }
      next_groups.push_back(std::move(bundle));
      result.trace.events.push_back(std::move(ev));
    }
    groups = std::move(next_groups);
  }

  result.tree.roots = std::move(groups[0]);
  normalize_tree(result.tree);
  return result;
}

std::string trace_to_json(const ForwardTrace& trace, bool full_precision, std::size_t max_values) {
  auto dump_vec = [&](const Vector& v) {
    nlohmann::json j;
    j["len"] = v.size();
    nlohmann::json vals = nlohmann::json::array();
    const std::size_t n = full_precision ? v.size() : std::min(v.size(), max_values);
    for (std::size_t i = 0; i < n; ++i) vals.push_back(v[i]);
    j["values"] = vals;
    if (n < v.size()) j["truncated"] = true;
    return j;
  };
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nt : trace.nodes) {
    nlohmann::json n;
    n["path"] = nt.path;
    n["layer"] = nt.pool;
    n["expert"] = nt.path.back();
    n["weight"] = nt.weight;
    n["embedding"] = dump_vec(nt.own);
    n["pre_activation"] = dump_vec(nt.pre);
    n["contribution"] = dump_vec(nt.out);
    nodes.push_back(n);
  }
  nlohmann::json j;
  j["theory_mode"] = trace.theory_mode;
  j["nodes"] = nodes;
  j["x_final"] = dump_vec(trace.x_final);
  j["output"] = dump_vec(trace.output);
  return j.dump(2);
}

}  // namespace smore
