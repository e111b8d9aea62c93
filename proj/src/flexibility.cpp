#include "smore/flexibility.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "smore/propagate.hpp"

namespace smore {

BigCount big_binomial(long long n, long long k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  BigCount result = 1;
  for (long long i = 1; i <= k; ++i) {
    result *= (n - k + i);
    result /= i;
  }
  return result;
}

BigCount gamma_smore(const ArchitectureSpec& spec) {
  BigCount total = 1;
  for (int l = 0; l < spec.depth; ++l) {
    const BigCount choices = big_binomial(spec.expert_counts[static_cast<std::size_t>(l)],
                                          spec.effective_fanout(l));
    const long long exponent = total_fanout(spec, l + 1);
    BigCount power = 1;
    for (long long e = 0; e < exponent; ++e) power *= choices;
    total *= power;
  }
  return total;
}

BigCount gamma_momor_bound(const ArchitectureSpec& spec) {
  const int L = spec.depth;
  BigCount total = big_binomial(spec.expert_counts[static_cast<std::size_t>(L - 1)],
                                spec.effective_fanout(L - 1));
  for (int l = 0; l <= L - 2; ++l) {
    const long long s = spec.expert_counts[static_cast<std::size_t>(l)];
    const long long f = spec.effective_fanout(l);
    const long long hi = std::min(total_fanout(spec, l), s);
    BigCount sum = 0;
    for (long long i = f; i <= hi; ++i) sum += big_binomial(s, i);
    total *= sum;
  }
  return total;
}

BigCount gamma_smore_star(const ArchitectureSpec& spec) {
  BigCount g = 1;  // depth-0 base case
  for (int l = 1; l <= spec.depth; ++l) {
    const long long s = spec.expert_counts[static_cast<std::size_t>(l - 1)];
    const long long f = spec.effective_fanout(l - 1);
    // C(g + f - 1, f) on a big g needs the multiplicative form directly
    BigCount with_repetition = 1;
    for (long long i = 1; i <= f; ++i) {
      with_repetition *= (g + f - i);
      with_repetition /= i;
    }
    g = big_binomial(s, f) * with_repetition;
  }
  return g;
}

BigCount gamma_smore_shared(const ArchitectureSpec& spec) {
  for (int l = 1; l < spec.depth; ++l) {
    if (spec.expert_counts[static_cast<std::size_t>(l)] != spec.expert_counts[0] ||
        spec.effective_fanout(l) != spec.effective_fanout(0))
      throw std::invalid_argument("gamma_smore_shared: requires uniform expert counts and fanouts");
  }
  return gamma_smore(spec);
}

CanonicalTree canonicalize(const RoutingTree& tree) {
  CanonicalTree paths;
  std::vector<int> path;
  auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes) -> void {
    for (const auto& n : nodes) {
      path.push_back(n.expert);
      if (n.children.empty())
        paths.push_back(path);
      else
        self(self, n.children);
      path.pop_back();
    }
  };
  walk(walk, tree.roots);
  std::sort(paths.begin(), paths.end());
  return paths;
}

BigCount tree_space_size(const ArchitectureSpec& spec) { return gamma_smore(spec); }

namespace {

std::vector<std::vector<int>> subsets_of(int s, int f) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int start) -> void {
    if (static_cast<int>(cur.size()) == f) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < s; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// The shape of the activated tree is fixed by the fanouts; a tree is a choice
// of one subset per internal position. Positions are visited in the same
// preorder that tree construction uses, so an odometer over choice indices
// streams every tree without materializing the space.
struct TreeEnumerator {
  const ArchitectureSpec& spec;
  std::vector<std::vector<std::vector<int>>> subsets;  // per pool
  std::vector<int> position_pool;                      // pool of each choice point, preorder
  std::vector<std::size_t> choice;

  explicit TreeEnumerator(const ArchitectureSpec& s) : spec(s) {
    for (int l = 0; l < spec.depth; ++l)
      subsets.push_back(subsets_of(spec.expert_counts[static_cast<std::size_t>(l)],
                                   spec.effective_fanout(l)));
    auto plan = [&](auto&& self, int pool) -> void {
      position_pool.push_back(pool);
      if (pool > 0) {
        for (int c = 0; c < spec.effective_fanout(pool); ++c) self(self, pool - 1);
      }
    };
    plan(plan, spec.depth - 1);
    choice.assign(position_pool.size(), 0);
  }

  RoutingTree build() const {
    RoutingTree tree;
    tree.depth = spec.depth;
    std::size_t cursor = 0;
    auto rec = [&](auto&& self, int pool) -> std::vector<TreeNode> {
      const auto& subset = subsets[static_cast<std::size_t>(pool)][choice[cursor]];
      ++cursor;
      std::vector<TreeNode> nodes;
      for (int e : subset) nodes.push_back(TreeNode{e, 1.0, {}});
      if (pool > 0)
        for (auto& n : nodes) n.children = self(self, pool - 1);
      return nodes;
    };
    tree.roots = rec(rec, spec.depth - 1);
    return tree;
  }

  bool advance() {
    for (std::size_t i = choice.size(); i-- > 0;) {
      const std::size_t options = subsets[static_cast<std::size_t>(position_pool[i])].size();
      if (++choice[i] < options) return true;
      choice[i] = 0;
    }
    return false;
  }
};

}  // namespace

void enumerate_trees(const ArchitectureSpec& spec,
                     const std::function<void(const RoutingTree&)>& visit, const BigCount& cap) {
  const BigCount count = tree_space_size(spec);
  if (count > cap) {
    throw std::runtime_error("enumerate_trees: tree space has " + count.str() +
                             " members, exceeding the cap of " + cap.str());
  }
  TreeEnumerator en(spec);
  do {
    visit(en.build());
  } while (en.advance());
}

BigCount count_nonisomorphic(const ArchitectureSpec& spec, const BigCount& cap) {
  std::set<CanonicalTree> classes;
  enumerate_trees(spec, [&](const RoutingTree& t) { classes.insert(canonicalize(t)); }, cap);
  return BigCount(classes.size());
}

namespace {

// Class signature under the child-activation variant: the expert-product term
// sees only the set of child experts, the propagated term only the multiset of
// child values, and a child's value does not depend on its own expert index.
std::string star_signature(const std::vector<TreeNode>& children) {
  std::string experts;
  std::vector<std::string> sub;
  for (const auto& c : children) {
    experts += std::to_string(c.expert) + ",";
    sub.push_back(star_signature(c.children));
  }
  std::sort(sub.begin(), sub.end());
  std::string sig = "(" + experts + "|";
  for (const auto& s : sub) sig += s + ";";
  return sig + ")";
}

}  // namespace

BigCount count_star_classes(const ArchitectureSpec& spec, const BigCount& cap) {
  std::set<std::string> classes;
  enumerate_trees(spec, [&](const RoutingTree& t) { classes.insert(star_signature(t.roots)); }, cap);
  return BigCount(classes.size());
}

DistinctnessReport distinctness_report(const ArchitectureSpec& spec, const ExpertBank& bank,
                                       const BigCount& cap) {
  DistinctnessReport report;
  const Vector probe(static_cast<std::size_t>(spec.base_dim), 0.0);
  std::vector<Vector> outputs;
  std::vector<RoutingTree> representatives;
  std::set<CanonicalTree> seen;
  enumerate_trees(spec, [&](const RoutingTree& t) {
    if (!seen.insert(canonicalize(t)).second) return;
    auto [out, trace] = forward(probe, t, bank, true);
    (void)out;
    outputs.push_back(trace.x_final);
    if (representatives.size() < 8) representatives.push_back(t);
  }, cap);
  report.classes = BigCount(seen.size());

  double min_inter = outputs.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  std::set<Vector> distinct;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    distinct.insert(outputs[i]);
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      double gap = 0.0;
      for (std::size_t k = 0; k < outputs[i].size(); ++k)
        gap = std::max(gap, std::abs(outputs[i][k] - outputs[j][k]));
      min_inter = std::min(min_inter, gap);
    }
  }
  report.distinct_outputs = BigCount(distinct.size());
  report.min_inter_class = outputs.size() > 1 ? min_inter : 0.0;

  // shuffle children of a few representatives; isomorphic copies must match
  // the original bit for bit
  RngState shuffle_rng(20240915);
  double max_intra = 0.0;
  for (std::size_t r = 0; r < representatives.size(); ++r) {
    auto [base_out, base_trace] = forward(probe, representatives[r], bank, true);
    (void)base_out;
    for (int rep = 0; rep < 3; ++rep) {
      RoutingTree shuffled = representatives[r];
      auto shuffle_rec = [&](auto&& self, std::vector<TreeNode>& nodes) -> void {
        for (std::size_t i = nodes.size(); i > 1; --i)
          std::swap(nodes[i - 1], nodes[shuffle_rng.next_u64() % i]);
        for (auto& n : nodes) self(self, n.children);
      };
      shuffle_rec(shuffle_rec, shuffled.roots);
      auto [out2, trace2] = forward(probe, shuffled, bank, true);
      (void)out2;
      for (std::size_t k = 0; k < trace2.x_final.size(); ++k)
        max_intra = std::max(max_intra, std::abs(trace2.x_final[k] - base_trace.x_final[k]));
    }
  }
  report.max_intra_class = max_intra;
  return report;
}

ArchitectureSpec uniform_spec(int s, int f, int depth) {
  ArchitectureSpec spec;
  spec.depth = depth;
  spec.expert_counts.assign(static_cast<std::size_t>(depth), s);
  spec.ranks.assign(static_cast<std::size_t>(depth), 2);
  spec.fanouts.assign(static_cast<std::size_t>(depth), f);
  spec.base_dim = 8;
  spec.output_dim = 8;
  spec.gate = GateType::noisy_topk;
  spec.activation = Activation::identity;
  validate_or_throw(spec);
  return spec;
}

std::vector<FlexRow> flexibility_table(int s, int f, int l_max) {
  std::vector<FlexRow> rows;
  for (int depth = 1; depth <= l_max; ++depth) {
    const ArchitectureSpec spec = uniform_spec(s, f, depth);
    FlexRow row;
    row.depth = depth;
    row.smore = gamma_smore(spec);
    row.momor_bound = gamma_momor_bound(spec);
    row.star = gamma_smore_star(spec);
    row.shared = gamma_smore_shared(spec);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string flexibility_table_csv(const std::vector<FlexRow>& rows) {
  std::ostringstream out;
  out << "L,gamma_smore,gamma_momor_bound,gamma_star,gamma_shared\n";
  for (const auto& r : rows) {
    out << r.depth << "," << r.smore.str() << "," << r.momor_bound.str() << "," << r.star.str()
        << "," << r.shared.str() << "\n";
  }
  return out.str();
}

}  // namespace smore
