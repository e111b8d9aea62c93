#include "smore/router.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "smore/kernels.hpp"
#include "smore/numerics.hpp"

namespace smore {

void normalize_tree(RoutingTree& tree) {
  auto sort_rec = [](auto&& self, std::vector<TreeNode>& nodes) -> void {
    std::sort(nodes.begin(), nodes.end(),
              [](const TreeNode& a, const TreeNode& b) { return a.expert < b.expert; });
    for (auto& n : nodes) self(self, n.children);
  };
  sort_rec(sort_rec, tree.roots);
}

std::vector<long long> level_counts(const RoutingTree& tree) {
  std::vector<long long> counts(static_cast<std::size_t>(tree.depth), 0);
  auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes, int pool) -> void {
    if (pool < 0) return;
    counts[static_cast<std::size_t>(pool)] += static_cast<long long>(nodes.size());
    for (const auto& n : nodes) self(self, n.children, pool - 1);
  };
  walk(walk, tree.roots, tree.depth - 1);
  return counts;
}

void check_tree(const RoutingTree& tree, const ArchitectureSpec& spec) {
  if (tree.depth != spec.depth) throw std::invalid_argument("tree/spec mismatch: depth differs");
  auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes, int pool) -> void {
    if (pool < 0) {
      if (!nodes.empty()) throw std::invalid_argument("tree/spec mismatch: children below layer 0");
      return;
    }
    std::set<int> seen;
    for (const auto& n : nodes) {
      if (n.expert < 0 || n.expert >= spec.expert_counts[static_cast<std::size_t>(pool)])
        throw std::invalid_argument("tree/spec mismatch: expert index out of range");
      if (!seen.insert(n.expert).second)
        throw std::invalid_argument("tree/spec mismatch: duplicate sibling expert");
      self(self, n.children, pool - 1);
    }
  };
  walk(walk, tree.roots, tree.depth - 1);
}

std::string tree_to_json(const RoutingTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  std::vector<std::pair<int, int>> path;  // (layer, expert) from the top down
  auto walk = [&](auto&& self, const std::vector<TreeNode>& level, int pool) -> void {
    for (const auto& n : level) {
      path.emplace_back(pool, n.expert);
      nlohmann::json entry;
      entry["path"] = path;
      entry["layer"] = pool;
      entry["expert"] = n.expert;
      entry["weight"] = n.weight;
      nodes.push_back(entry);
      self(self, n.children, pool - 1);
      path.pop_back();
    }
  };
  walk(walk, tree.roots, tree.depth - 1);
  nlohmann::json j;
  j["depth"] = tree.depth;
  j["nodes"] = nodes;
  return j.dump(2);
}

RoutingTree tree_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  RoutingTree tree;
  tree.depth = j.at("depth").get<int>();
  for (const auto& entry : j.at("nodes")) {
    const auto path = entry.at("path").get<std::vector<std::pair<int, int>>>();
    std::vector<TreeNode>* level = &tree.roots;
    TreeNode* node = nullptr;
    for (const auto& [layer, expert] : path) {
      (void)layer;
      node = nullptr;
      for (auto& n : *level)
        if (n.expert == expert) node = &n;
      if (!node) {
        level->push_back(TreeNode{expert, 1.0, {}});
        node = &level->back();
      }
      level = &node->children;
    }
    if (node) node->weight = entry.at("weight").get<double>();
  }
  normalize_tree(tree);
  return tree;
}

void GateStats::merge(const GateStats& other) {
  if (pools.empty()) {
    *this = other;
    return;
  }
  if (other.pools.empty()) return;
  if (other.pools.size() != pools.size()) throw std::invalid_argument("GateStats::merge: pool count mismatch");
  for (std::size_t l = 0; l < pools.size(); ++l) {
    auto& a = pools[l];
    const auto& b = other.pools[l];
    if (a.importance.size() != b.importance.size())
      throw std::invalid_argument("GateStats::merge: pool size mismatch");
    axpy(a.importance, 1.0, b.importance);
    axpy(a.load, 1.0, b.load);
    axpy(a.prob_sum, 1.0, b.prob_sum);
    a.events += b.events;
    a.tokens += b.tokens;
  }
}

namespace {

std::vector<int> top_f(const Vector& values, int f) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[static_cast<std::size_t>(a)] != values[static_cast<std::size_t>(b)])
      return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
    return a < b;
  });
  order.resize(static_cast<std::size_t>(f));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

GateSelection gate_select(const Vector& scores, GateType gate, int fanout, RngState& rng,
                          RouteMode mode, const Vector& noise_scores) {
  const int s = static_cast<int>(scores.size());
  if (s == 0) throw std::invalid_argument("gate_select: empty score vector");
  if (fanout > s) throw std::invalid_argument("gate_select: fanout exceeds expert count");
  if (fanout < 1) throw std::invalid_argument("gate_select: fanout must be positive");

  GateSelection out;
  switch (gate) {
    case GateType::dense: {
      out.indices.resize(static_cast<std::size_t>(s));
      std::iota(out.indices.begin(), out.indices.end(), 0);
      out.weights = softmax(scores);
      out.probs_full = out.weights;
      out.perturbed = scores;
      break;
    }
    case GateType::noisy_topk: {
      out.perturbed = scores;
      if (mode == RouteMode::train) {
        if (noise_scores.size() != scores.size())
          throw std::invalid_argument("gate_select: noisy-topk train mode needs noise scores");
        out.noise_eps.resize(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
          out.noise_eps[i] = rng.normal();
          out.perturbed[i] += out.noise_eps[i] * softplus(noise_scores[i]);
        }
      }
      out.indices = top_f(out.perturbed, fanout);
      Vector surv(out.indices.size());
      for (std::size_t k = 0; k < out.indices.size(); ++k)
        surv[k] = out.perturbed[static_cast<std::size_t>(out.indices[k])];
      out.weights = softmax(surv);
      out.probs_full.assign(scores.size(), 0.0);
      for (std::size_t k = 0; k < out.indices.size(); ++k)
        out.probs_full[static_cast<std::size_t>(out.indices[k])] = out.weights[k];
      break;
    }
    case GateType::switch_gate: {
      out.perturbed = scores;
      out.probs_full = softmax(scores);
      out.indices = top_f(out.probs_full, fanout);
      out.weights.resize(out.indices.size());
      for (std::size_t k = 0; k < out.indices.size(); ++k)
        out.weights[k] = out.probs_full[static_cast<std::size_t>(out.indices[k])];
      break;
    }
  }
  return out;
}

namespace {

void init_stats(GateStats& stats, const ArchitectureSpec& spec) {
  stats.gate = spec.gate;
  stats.pools.resize(static_cast<std::size_t>(spec.depth));
  for (int l = 0; l < spec.depth; ++l) {
    auto& p = stats.pools[static_cast<std::size_t>(l)];
    const std::size_t s = static_cast<std::size_t>(spec.expert_counts[static_cast<std::size_t>(l)]);
    p.importance.assign(s, 0.0);
    p.load.assign(s, 0.0);
    p.prob_sum.assign(s, 0.0);
  }
}

void accumulate_stats(GateStats& stats, int pool, const GateSelection& sel) {
  auto& p = stats.pools[static_cast<std::size_t>(pool)];
  for (std::size_t k = 0; k < sel.indices.size(); ++k) {
    p.importance[static_cast<std::size_t>(sel.indices[k])] += sel.weights[k];
    p.load[static_cast<std::size_t>(sel.indices[k])] += 1.0;
  }
  if (!sel.probs_full.empty()) axpy(p.prob_sum, 1.0, sel.probs_full);
  p.events += 1;
}

struct TopDownBuilder {
  const ExpertBank& bank;
  RngState& rng;
  RouteMode mode;
  RouteResult& result;

  std::vector<TreeNode> build_children(int pool, const std::vector<int>& ancestors) {
    const ArchitectureSpec& spec = bank.spec;
    SelectionEvent ev;
    ev.pool = pool;
    ev.parent_path = ancestors;

    // Query input: down-projected token, then the keys of the activated
    // ancestors from the immediate parent upward.
    Vector u = result.trace.x_down;
    for (auto it = ancestors.rbegin(); it != ancestors.rend(); ++it) {
      const int anc_layer = pool + 1 + static_cast<int>(it - ancestors.rbegin());
      const Matrix& k = bank.keys[static_cast<std::size_t>(anc_layer)];
      u.insert(u.end(), k.row(static_cast<std::size_t>(*it)), k.row(static_cast<std::size_t>(*it)) + k.cols);
    }
    if (spec.gate == GateType::switch_gate && mode == RouteMode::train && !u.empty()) {
      ev.jitter.resize(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        ev.jitter[i] = rng.uniform(1.0 - kSwitchJitterEps, 1.0 + kSwitchJitterEps);
        u[i] *= ev.jitter[i];
      }
    }
    ev.input = u;

    const Perceptron& qnet = bank.query[static_cast<std::size_t>(pool)];
    if (!qnet.empty()) ev.query = perceptron_forward(qnet, u, &ev.hidden_pre);

    const Matrix& keys = bank.keys[static_cast<std::size_t>(pool)];
    const int s = spec.expert_counts[static_cast<std::size_t>(pool)];
    ev.scores.assign(static_cast<std::size_t>(s), 0.0);
    if (!ev.query.empty()) {
      for (int i = 0; i < s; ++i)
        ev.scores[static_cast<std::size_t>(i)] =
            kernels::active().dot(keys.cols, keys.row(static_cast<std::size_t>(i)), ev.query.data());
    }
    if (spec.gate == GateType::noisy_topk) {
      const Matrix& nk = bank.noise_keys[static_cast<std::size_t>(pool)];
      ev.noise_scores.assign(static_cast<std::size_t>(s), 0.0);
      if (!ev.query.empty()) {
        for (int i = 0; i < s; ++i)
          ev.noise_scores[static_cast<std::size_t>(i)] =
              kernels::active().dot(nk.cols, nk.row(static_cast<std::size_t>(i)), ev.query.data());
      }
    }

    ev.sel = gate_select(ev.scores, spec.gate, spec.effective_fanout(pool), rng, mode, ev.noise_scores);
    accumulate_stats(result.stats, pool, ev.sel);

    std::vector<TreeNode> nodes;
    nodes.reserve(ev.sel.indices.size());
    for (std::size_t k = 0; k < ev.sel.indices.size(); ++k) {
      TreeNode node;
      node.expert = ev.sel.indices[k];
      node.weight = ev.sel.weights[k];
      nodes.push_back(std::move(node));
    }
    result.trace.events.push_back(std::move(ev));
    if (pool > 0) {
      for (auto& node : nodes) {
        std::vector<int> path = ancestors;
        path.push_back(node.expert);
        node.children = build_children(pool - 1, path);
      }
    }
    return nodes;
  }
};

}  // namespace

RouteResult route_topdown(const Vector& x, const ExpertBank& bank, RngState& rng, RouteMode mode) {
  const ArchitectureSpec& spec = bank.spec;
  if (static_cast<int>(x.size()) != spec.base_dim)
    throw std::invalid_argument("route_topdown: token length does not match base_dim");
  RouteResult result;
  result.tree.depth = spec.depth;
  init_stats(result.stats, spec);
  result.trace.x_down = matvec(bank.token_down, x);
  result.trace.differentiable = true;

  TopDownBuilder builder{bank, rng, mode, result};
  result.tree.roots = builder.build_children(spec.depth - 1, {});
  for (auto& p : result.stats.pools) p.tokens = 1;
  return result;
}

namespace {

double cv_squared(const Vector& v) {
  if (v.empty()) return 0.0;
  const double n = static_cast<double>(v.size());
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  if (sum <= 0.0) return 0.0;
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  return var / (mean * mean);
}

}  // namespace

double aux_losses(const GateStats& stats, double gamma) {
  if (gamma == 0.0) return 0.0;
  if (stats.gate == GateType::dense) return 0.0;
  double total = 0.0;
  for (const auto& p : stats.pools) {
    if (p.events == 0) continue;
    if (stats.gate == GateType::noisy_topk) {
      total += cv_squared(p.importance) + cv_squared(p.load);
    } else {
      const double selections = std::accumulate(p.load.begin(), p.load.end(), 0.0);
      if (selections <= 0.0) continue;
      const double s = static_cast<double>(p.importance.size());
      double term = 0.0;
      for (std::size_t i = 0; i < p.load.size(); ++i) {
        const double frac = p.load[i] / selections;
        const double mean_prob = p.prob_sum[i] / static_cast<double>(p.events);
        term += frac * mean_prob;
      }
      total += s * term;
    }
  }
  return gamma * total;
}

AuxGrad aux_loss_gradient(const GateStats& stats, double gamma) {
  AuxGrad grad;
  grad.d_importance.resize(stats.pools.size());
  grad.d_prob.resize(stats.pools.size());
  for (std::size_t l = 0; l < stats.pools.size(); ++l) {
    const auto& p = stats.pools[l];
    grad.d_importance[l].assign(p.importance.size(), 0.0);
    grad.d_prob[l].assign(p.importance.size(), 0.0);
    if (gamma == 0.0 || stats.gate == GateType::dense || p.events == 0) continue;
    if (stats.gate == GateType::noisy_topk) {
      // d/dx_i of CV^2 = (n*Q - S^2)/S^2 with S = sum x, Q = sum x^2
      const double n = static_cast<double>(p.importance.size());
      double S = 0.0, Q = 0.0;
      for (double x : p.importance) {
        S += x;
        Q += x * x;
      }
      if (S <= 0.0) continue;
      for (std::size_t i = 0; i < p.importance.size(); ++i)
        grad.d_importance[l][i] = gamma * 2.0 * n * (p.importance[i] * S - Q) / (S * S * S);
    } else {
      const double selections = std::accumulate(p.load.begin(), p.load.end(), 0.0);
      if (selections <= 0.0) continue;
      const double s = static_cast<double>(p.importance.size());
      for (std::size_t i = 0; i < p.load.size(); ++i) {
        const double frac = p.load[i] / selections;
        grad.d_prob[l][i] = gamma * s * frac / static_cast<double>(p.events);
      }
    }
  }
  return grad;
}

}  // namespace smore
