#include "smore/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "smore/costmodel.hpp"
#include "smore/flexibility.hpp"
#include "smore/numerics.hpp"
#include "smore/propagate.hpp"

namespace smore {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Vector random_vector(std::size_t n, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

ExpertBank random_bank(const ArchitectureSpec& spec, RngState& rng) {
  ExpertBank bank = init_bank(spec, rng);
  for (auto& layer : bank.up)
    for (auto& b : layer) {
      Matrix fresh = seeded_init(b.rows, b.cols, InitScheme::uniform_scaled, rng);
      b = std::move(fresh);
    }
  return bank;
}

double max_rel_err(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

ArchitectureSpec discrimination_spec() {
  ArchitectureSpec spec;
  spec.depth = 2;
  spec.expert_counts = {4, 2};
  spec.ranks = {2, 2};
  spec.fanouts = {2, 2};
  spec.base_dim = 8;
  spec.output_dim = 8;
  spec.activation = Activation::identity;
  spec.gate = GateType::noisy_topk;
  validate_or_throw(spec);
  return spec;
}

std::vector<RoutingTree> discrimination_trio() {
  auto make = [](std::vector<int> left, std::vector<int> right) {
    RoutingTree tree;
    tree.depth = 2;
    TreeNode p0{0, 1.0, {}};
    TreeNode p1{1, 1.0, {}};
    for (int e : left) p0.children.push_back(TreeNode{e, 1.0, {}});
    for (int e : right) p1.children.push_back(TreeNode{e, 1.0, {}});
    tree.roots = {p0, p1};
    normalize_tree(tree);
    return tree;
  };
  // (a): parents interleave the leaves; (b): contiguous split; (c): the same
  // split with the two parents swapped.
  return {make({0, 2}, {1, 3}), make({0, 1}, {2, 3}), make({2, 3}, {0, 1})};
}

// --------------------------------------------------------------------------
// props
// --------------------------------------------------------------------------

std::vector<CheckResult> verify_props(std::uint64_t seed) {
  std::vector<CheckResult> results;
  RngState rng(seed);

  {
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      const int d = 4 + static_cast<int>(rng.next_u64() % 13);   // up to 16
      const int s = 1 + static_cast<int>(rng.next_u64() % 4);
      const int r = 1 + static_cast<int>(rng.next_u64() % 4);
      const BaselineParams base = random_baseline(d, d, {s}, {r}, rng);
      const ExpertBank bank = construct_equivalent_molre(base, rng);
      for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::pair<int, double>> selection;
        RoutingTree tree;
        tree.depth = 1;
        for (int i = 0; i < s; ++i) {
          if (rng.uniform() < 0.5) continue;
          const double alpha = (trial % 2 == 0) ? 1.0 : rng.uniform(0.0, 1.0);
          selection.emplace_back(i, alpha);
          tree.roots.push_back(TreeNode{i, alpha, {}});
        }
        const Vector x = random_vector(static_cast<std::size_t>(d), rng);
        const Vector want = forward_molre(x, selection, base);
        const Vector got = forward_smore(x, tree, bank, false).first;
        worst = std::max(worst, max_rel_err(got, want));
      }
    }
    results.push_back({"prop1 molre-equivalence (50x100, d<=16)", worst < 1e-10,
                       "max rel err " + fmt(worst) + " tol 1e-10"});
  }

  {
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
      const int L = 1 + static_cast<int>(rng.next_u64() % 3);
      const int d = 4 + static_cast<int>(rng.next_u64() % 13);
      std::vector<int> s, r, f;
      for (int l = 0; l < L; ++l) {
        s.push_back(2 + static_cast<int>(rng.next_u64() % 3));
        r.push_back(1 + static_cast<int>(rng.next_u64() % 3));
        f.push_back(1 + static_cast<int>(rng.next_u64() % s.back()));
      }
      const BaselineParams base = random_baseline(d, d, s, r, rng);
      const ExpertBank bank = construct_equivalent_momor(base, rng);

      // random activated tree with random weights
      auto build = [&](auto&& self, int pool) -> std::vector<TreeNode> {
        std::vector<int> picks;
        while (static_cast<int>(picks.size()) < f[static_cast<std::size_t>(pool)]) {
          const int e = static_cast<int>(rng.next_u64() % s[static_cast<std::size_t>(pool)]);
          if (std::find(picks.begin(), picks.end(), e) == picks.end()) picks.push_back(e);
        }
        std::sort(picks.begin(), picks.end());
        std::vector<TreeNode> nodes;
        for (int e : picks) {
          TreeNode n{e, inst % 2 == 0 ? 1.0 : rng.uniform(0.2, 1.0), {}};
          if (pool > 0) n.children = self(self, pool - 1);
          nodes.push_back(std::move(n));
        }
        return nodes;
      };
      RoutingTree tree;
      tree.depth = L;
      tree.roots = build(build, L - 1);

      // aggregated coefficients: product of gate weights along every path
      std::vector<Vector> alpha_hat(static_cast<std::size_t>(L));
      for (int l = 0; l < L; ++l)
        alpha_hat[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(s[static_cast<std::size_t>(l)]), 0.0);
      auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes, int pool, double prefix) -> void {
        for (const auto& n : nodes) {
          const double pi = prefix * n.weight;
          alpha_hat[static_cast<std::size_t>(pool)][static_cast<std::size_t>(n.expert)] += pi;
          self(self, n.children, pool - 1, pi);
        }
      };
      walk(walk, tree.roots, L - 1, 1.0);

      for (int trial = 0; trial < 100; ++trial) {
        const Vector x = random_vector(static_cast<std::size_t>(d), rng);
        const Vector want = forward_momor(x, alpha_hat, base);
        const Vector got = forward_smore(x, tree, bank, false).first;
        worst = std::max(worst, max_rel_err(got, want));
      }
    }
    results.push_back({"prop2 momor-equivalence (50x100, L<=3)", worst < 1e-10,
                       "max rel err " + fmt(worst) + " tol 1e-10"});
  }

  {
    bool ok = true;
    for (int c = 0; c <= 6; c += 3)
      for (int b = c; b <= c + 6; b += 2)
        for (int a = b; a <= b + 6; a += 3) {
          const Matrix lhs = matmul(projection_embed(a, b), projection_embed(b, c));
          const Matrix rhs = projection_embed(a, c);
          if (lhs.data != rhs.data) ok = false;
        }
    results.push_back({"projection-embed composition", ok, "exact block identity"});
  }

  {
    double worst = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
      ArchitectureSpec spec;
      spec.depth = 1 + static_cast<int>(rng.next_u64() % 3);
      for (int l = 0; l < spec.depth; ++l) {
        spec.expert_counts.push_back(2 + static_cast<int>(rng.next_u64() % 3));
        spec.ranks.push_back(1 + static_cast<int>(rng.next_u64() % 3));
        spec.fanouts.push_back(1 + static_cast<int>(rng.next_u64() % spec.expert_counts.back()));
      }
      spec.base_dim = 6;
      spec.output_dim = 5;
      spec.activation = Activation::identity;
      spec.gate = GateType::noisy_topk;
      spec.router_down_dim = 4;
      spec.router_key_dim = 3;
      validate_or_throw(spec);
      ExpertBank bank = random_bank(spec, rng);
      for (int trial = 0; trial < 5; ++trial) {
        const Vector x = random_vector(static_cast<std::size_t>(spec.base_dim), rng);
        RngState route_rng = rng.fork(rng.next_u64());
        const RouteResult route = route_topdown(x, bank, route_rng, RouteMode::eval);
        const CollapsedModel collapsed = collapse_to_single_layer(bank, route.tree);
        for (int t = 0; t < 20; ++t) {
          const Vector probe = random_vector(static_cast<std::size_t>(spec.base_dim), rng);
          const Vector want = forward_smore(probe, route.tree, bank, false).first;
          const Vector got = forward_momor(probe, collapsed.alpha_hat, collapsed.params);
          worst = std::max(worst, max_rel_err(got, want));
        }
      }
    }
    results.push_back({"collapse-to-single-layer equivalence", worst < 1e-12,
                       "max rel err " + fmt(worst) + " tol 1e-12"});
  }

  return results;
}

// --------------------------------------------------------------------------
// theorems
// --------------------------------------------------------------------------

std::vector<CheckResult> verify_theorems() {
  std::vector<CheckResult> results;
  const BigCount cap(100000);

  {
    bool ok = true;
    std::string detail;
    for (int s : {2, 3, 4})
      for (int f : {1, 2})
        for (int L : {2, 3}) {
          if (f > s) continue;
          const ArchitectureSpec spec = uniform_spec(s, f, L);
          if (tree_space_size(spec) > cap) continue;
          const BigCount formula = gamma_smore(spec);
          const BigCount counted = count_nonisomorphic(spec, cap);
          if (formula != counted) ok = false;
          detail += "s=" + std::to_string(s) + ",f=" + std::to_string(f) + ",L=" +
                    std::to_string(L) + ":" + counted.str() + (formula == counted ? "==" : "!=") +
                    formula.str() + " ";
        }
    results.push_back({"theorem2 gamma_smore == count_nonisomorphic (grid)", ok, detail});
  }

  {
    const ArchitectureSpec spec = uniform_spec(4, 2, 2);
    const BigCount counted = count_nonisomorphic(spec, cap);
    results.push_back({"theorem2 representative s=[4,4] f=[2,2]", counted == 216 && gamma_smore(spec) == 216,
                       counted.str() + "==216"});
  }

  {
    bool ok = true;
    std::string detail;
    for (int s : {2, 3, 4})
      for (int f : {1, 2})
        for (int L : {2, 3}) {
          if (f > s) continue;
          const ArchitectureSpec spec = uniform_spec(s, f, L);
          if (tree_space_size(spec) > cap) continue;
          const BigCount formula = gamma_smore_star(spec);
          const BigCount counted = count_star_classes(spec, cap);
          if (formula != counted) ok = false;
          detail += "s=" + std::to_string(s) + ",f=" + std::to_string(f) + ",L=" +
                    std::to_string(L) + ":" + counted.str() + (formula == counted ? "==" : "!=") +
                    formula.str() + " ";
        }
    results.push_back({"corollary1 gamma_star == count_star_classes (grid)", ok, detail});
  }

  {
    const ArchitectureSpec spec = uniform_spec(4, 2, 2);
    const BigCount star = gamma_smore_star(spec);
    const BigCount bound = gamma_momor_bound(spec);
    const BigCount full = gamma_smore(spec);
    const bool ok = star == 126 && bound == 66 && full == 216 && bound <= star && star <= full;
    results.push_back({"ordering chain 66 <= 126 <= 216 at s=4 f=2 L=2", ok,
                       bound.str() + " <= " + star.str() + " <= " + full.str()});
  }

  {
    bool ok = true;
    for (int s : {2, 3, 4})
      for (int f : {1, 2}) {
        if (f > s) continue;
        for (int L : {2, 3}) {
          const ArchitectureSpec spec = uniform_spec(s, f, L);
          const BigCount bound = gamma_momor_bound(spec);
          const BigCount star = gamma_smore_star(spec);
          const BigCount full = gamma_smore(spec);
          if (!(bound <= star && star <= full)) ok = false;
        }
        const ArchitectureSpec one = uniform_spec(s, f, 1);
        if (!(gamma_momor_bound(one) == gamma_smore_star(one) &&
              gamma_smore_star(one) == gamma_smore(one)))
          ok = false;
      }
    results.push_back({"ordering chain bound <= star <= full (grid, equal at L=1)", ok, ""});
  }

  {
    bool ok = true;
    std::string detail;
    BigCount prev_num = 0, prev_den = 1;
    for (int L = 2; L <= 5; ++L) {
      const ArchitectureSpec spec = uniform_spec(4, 2, L);
      const BigCount num = gamma_smore(spec);
      const BigCount den = gamma_momor_bound(spec);
      if (L > 2 && !(num * prev_den > prev_num * den)) ok = false;
      detail += "L=" + std::to_string(L) + ":" + num.str() + "/" + den.str() + " ";
      prev_num = num;
      prev_den = den;
    }
    results.push_back({"flexibility ratio strictly increasing, L=2..5 (s=4, f=2)", ok, detail});
  }

  {
    ArchitectureSpec spec = uniform_spec(4, 2, 2);
    spec.activation = Activation::mlp;
    spec.bias_enabled = true;
    RngState rng(99);
    const ExpertBank bank = construct_distinctness_params(spec, rng);
    const DistinctnessReport report = distinctness_report(spec, bank, cap);
    const bool ok = report.classes == 216 && report.distinct_outputs == 216 &&
                    report.min_inter_class > 1e-6 && report.max_intra_class == 0.0;
    results.push_back({"theorem2 distinctness construction (216 classes)", ok,
                       "distinct " + report.distinct_outputs.str() + "/216, min inter " +
                           fmt(report.min_inter_class) + " > 1e-6, max intra " +
                           fmt(report.max_intra_class)});
  }

  {
    ArchitectureSpec spec = uniform_spec(4, 2, 2);
    spec.activation = Activation::mlp;
    spec.bias_enabled = true;
    RngState rng(99);
    ExpertBank bank = construct_distinctness_params(spec, rng);
    bank.spec.activation = Activation::identity;
    bank.sigma_mlp.clear();
    ArchitectureSpec ident = spec;
    ident.activation = Activation::identity;
    const DistinctnessReport report = distinctness_report(ident, bank, cap);
    const BigCount bound = gamma_momor_bound(spec);
    const bool ok = report.distinct_outputs <= bound;
    results.push_back({"identity activation collapses distinct outputs to <= bound", ok,
                       report.distinct_outputs.str() + " <= " + bound.str()});
  }

  {
    ArchitectureSpec spec = uniform_spec(2, 1, 2);
    spec.activation = Activation::mlp;
    spec.bias_enabled = true;
    RngState rng(7);
    const ExpertBank bank = construct_distinctness_params(spec, rng);
    const DistinctnessReport report = distinctness_report(spec, bank, cap);
    const bool ok = report.classes == 4 && report.distinct_outputs == 4 &&
                    report.min_inter_class > 1e-6;
    results.push_back({"distinctness on the 4-tree instance (s=2, f=1, L=2)", ok,
                       report.distinct_outputs.str() + "/4 distinct"});
  }

  return results;
}

// --------------------------------------------------------------------------
// gradients
// --------------------------------------------------------------------------

namespace {

ArchitectureSpec gradient_spec() {
  ArchitectureSpec spec;
  spec.depth = 2;
  spec.expert_counts = {2, 2};
  spec.ranks = {2, 2};
  spec.fanouts = {1, 1};
  spec.base_dim = 6;
  spec.output_dim = 6;
  spec.activation = Activation::relu;
  spec.gate = GateType::noisy_topk;
  spec.router_down_dim = 4;
  spec.router_key_dim = 3;
  spec.balance_coeff = 0.0;
  validate_or_throw(spec);
  return spec;
}

// Margin test: no relu pre-activation within margin of 0 and no top-f score
// gap within margin, so finite-difference probes stay on one smooth branch.
bool well_separated(const ForwardTrace& trace, double margin) {
  for (const auto& nt : trace.nodes)
    for (double z : nt.pre)
      if (std::abs(z) < margin) return false;
  if (!trace.routing) return true;
  for (const auto& ev : trace.routing->events) {
    Vector sorted = ev.sel.perturbed;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const std::size_t f = ev.sel.indices.size();
    if (f < sorted.size() && sorted[f - 1] - sorted[f] < margin) return false;
  }
  return true;
}

}  // namespace

std::vector<CheckResult> verify_gradients(std::uint64_t seed) {
  std::vector<CheckResult> results;
  const ArchitectureSpec spec = gradient_spec();

  double worst = 0.0;
  int accepted = 0;
  std::uint64_t attempt = 0;
  while (accepted < 20 && attempt < 200) {
    RngState rng(seed + 1000 * ++attempt);
    ExpertBank bank = random_bank(spec, rng);
    const Vector x = random_vector(static_cast<std::size_t>(spec.base_dim), rng);
    const Vector probe_dir = random_vector(static_cast<std::size_t>(spec.output_dim), rng);

    RngState route_rng(0);
    auto [out, trace] = route_and_forward(x, bank, route_rng, RouteMode::eval);
    (void)out;
    if (!well_separated(trace, 1e-3)) continue;
    ++accepted;

    const ExpertBank grads = backward(trace, probe_dir, bank, nullptr);
    const Vector analytic = flatten_params(grads, true);

    ExpertBank probe_bank = bank;
    auto f = [&](const Vector& theta) {
      unflatten_params(probe_bank, theta, true);
      RngState r(0);
      auto [y, t] = route_and_forward(x, probe_bank, r, RouteMode::eval);
      (void)t;
      return dot(probe_dir, y);
    };
    const Vector numeric = finite_diff_grad(f, flatten_params(bank, true), 1e-5);
    worst = std::max(worst, max_rel_err(analytic, numeric));
  }
  results.push_back({"backward vs central differences (20 seeds, full parameter vector)",
                     accepted == 20 && worst < 1e-5,
                     "accepted " + std::to_string(accepted) + "/20, max rel err " + fmt(worst) +
                         " tol 1e-5"});

  // auxiliary loss path: gradient of the balance objective alone
  {
    double aux_worst = 0.0;
    int aux_accepted = 0;
    std::uint64_t attempt2 = 0;
    ArchitectureSpec aux_spec = gradient_spec();
    aux_spec.balance_coeff = 0.01;
    while (aux_accepted < 5 && attempt2 < 100) {
      RngState rng(seed + 77777 + 1000 * ++attempt2);
      ExpertBank bank = random_bank(aux_spec, rng);
      const Vector x = random_vector(static_cast<std::size_t>(aux_spec.base_dim), rng);
      RngState route_rng(0);
      GateStats stats;
      auto [out, trace] = route_and_forward(x, bank, route_rng, RouteMode::eval, &stats);
      (void)out;
      if (!well_separated(trace, 1e-3)) continue;
      ++aux_accepted;
      const AuxGrad aux_grad = aux_loss_gradient(stats, aux_spec.balance_coeff);
      const Vector zero_grad(static_cast<std::size_t>(aux_spec.output_dim), 0.0);
      const ExpertBank grads = backward(trace, zero_grad, bank, &aux_grad);
      const Vector analytic = flatten_params(grads, true);

      ExpertBank probe_bank = bank;
      auto f = [&](const Vector& theta) {
        unflatten_params(probe_bank, theta, true);
        RngState r(0);
        GateStats st;
        auto [y, t] = route_and_forward(x, probe_bank, r, RouteMode::eval, &st);
        (void)y;
        (void)t;
        return aux_losses(st, aux_spec.balance_coeff);
      };
      const Vector numeric = finite_diff_grad(f, flatten_params(bank, true), 1e-5);
      aux_worst = std::max(aux_worst, max_rel_err(analytic, numeric));
    }
    results.push_back({"balance-loss gradient vs central differences (5 seeds)",
                       aux_accepted == 5 && aux_worst < 1e-5,
                       "max rel err " + fmt(aux_worst) + " tol 1e-5"});
  }

  return results;
}

// --------------------------------------------------------------------------
// fig5 discrimination trio
// --------------------------------------------------------------------------

std::vector<CheckResult> verify_fig5(std::uint64_t seed) {
  std::vector<CheckResult> results;
  const auto trio = discrimination_trio();

  {
    ArchitectureSpec spec = discrimination_spec();
    RngState rng(seed);
    const ExpertBank bank = random_bank(spec, rng);
    RngState xr(seed + 1);
    const Vector x = random_vector(8, xr);
    std::vector<Vector> outs;
    for (const auto& tree : trio) outs.push_back(forward_smore(x, tree, bank, true).first);
    double gap = 0.0;
    for (std::size_t i = 0; i < outs.size(); ++i)
      for (std::size_t j = i + 1; j < outs.size(); ++j) {
        Vector d = outs[i];
        axpy(d, -1.0, outs[j]);
        gap = std::max(gap, norm_inf(d));
      }
    results.push_back({"identity activation: outputs identical on (a),(b),(c)", gap <= 1e-12,
                       "max pairwise gap " + fmt(gap) + " tol 1e-12"});
  }

  {
    ArchitectureSpec spec = discrimination_spec();
    spec.variant = Variant::smore_star;
    spec.activation = Activation::relu;
    RngState rng(seed + 2);
    const ExpertBank bank = random_bank(spec, rng);
    RngState xr(seed + 3);
    const Vector x = random_vector(8, xr);
    std::vector<Vector> outs;
    for (const auto& tree : trio) outs.push_back(forward_smore_star(x, tree, bank, true).first);
    Vector bc = outs[1];
    axpy(bc, -1.0, outs[2]);
    Vector ab = outs[0];
    axpy(ab, -1.0, outs[1]);
    const double gap_bc = norm_inf(bc);
    const double gap_ab = norm_inf(ab);
    results.push_back({"star variant: (b) == (c), (a) != (b)", gap_bc <= 1e-12 && gap_ab > 1e-6,
                       "gap(b,c) " + fmt(gap_bc) + " <= 1e-12, gap(a,b) " + fmt(gap_ab) + " > 1e-6"});
  }

  {
    ArchitectureSpec spec = discrimination_spec();
    spec.activation = Activation::mlp;
    spec.bias_enabled = true;
    RngState rng(seed + 4);
    const ExpertBank bank = construct_distinctness_params(spec, rng);
    RngState xr(seed + 5);
    const Vector x = random_vector(8, xr);
    std::vector<Vector> outs;
    for (const auto& tree : trio) outs.push_back(forward_smore(x, tree, bank, true).first);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < outs.size(); ++i)
      for (std::size_t j = i + 1; j < outs.size(); ++j) {
        Vector d = outs[i];
        axpy(d, -1.0, outs[j]);
        min_gap = std::min(min_gap, norm_inf(d));
      }
    results.push_back({"distinctness parameters: (a),(b),(c) pairwise distinct", min_gap > 1e-6,
                       "min pairwise gap " + fmt(min_gap) + " > 1e-6"});
  }

  return results;
}

// --------------------------------------------------------------------------
// costs
// --------------------------------------------------------------------------

std::vector<CheckResult> verify_costs() {
  std::vector<CheckResult> results;
  const std::vector<std::pair<int, int>> grid = {{8, 2}, {8, 3}, {8, 4}, {16, 2}, {16, 3}, {16, 4}};

  {
    const auto rows = cost_table(grid, 4096, 4, 2, false);
    const std::vector<std::array<std::string, 3>> want = {
        {"0.5M", "0.005M", "1.0%"}, {"0.8M", "0.014M", "1.8%"}, {"1.0M", "0.031M", "2.9%"},
        {"1.0M", "0.020M", "2.0%"}, {"1.6M", "0.057M", "3.6%"}, {"2.1M", "0.123M", "5.9%"}};
    bool ok = rows.size() == want.size();
    std::string detail;
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
      const bool row_ok = format_mega(rows[i].main, 1) == want[i][0] &&
                          format_mega(rows[i].delta, 3) == want[i][1] &&
                          format_ratio(rows[i].ratio) == want[i][2];
      if (!row_ok) {
        ok = false;
        detail = "row " + std::to_string(i) + " got " + format_mega(rows[i].main, 1) + "," +
                 format_mega(rows[i].delta, 3) + "," + format_ratio(rows[i].ratio);
      }
    }
    const auto first = param_count(uniform_spec(4, 2, 2));
    results.push_back({"parameter table reproduction (6 rows, d=4096)", ok && rows[0].main == 524288 && rows[0].delta == 5120,
                       detail.empty() ? "all six rows match printed rounding" : detail});
    (void)first;
  }

  {
    const auto rows = cost_table(grid, 4096, 4, 2, true);
    const std::vector<std::array<std::string, 2>> want = {
        {"0.006M", "1.2%"}, {"0.026M", "3.3%"}, {"0.079M", "7.5%"},
        {"0.025M", "2.3%"}, {"0.104M", "6.6%"}, {"0.315M", "15.0%"}};
    bool ok = rows.size() == want.size();
    std::string detail;
    for (std::size_t i = 0; ok && i < rows.size(); ++i) {
      const bool row_ok = format_mega(rows[i].delta, 3) == want[i][0] &&
                          format_ratio(rows[i].ratio) == want[i][1];
      if (!row_ok) {
        ok = false;
        detail = "row " + std::to_string(i) + " got " + format_mega(rows[i].delta, 3) + "," +
                 format_ratio(rows[i].ratio);
      }
    }
    results.push_back({"flop table reproduction (6 rows, d=4096)",
                       ok && rows[0].delta == 6144 && rows[3].delta == 24576,
                       detail.empty() ? "all six rows match printed rounding" : detail});
  }

  {
    bool ok = true;
    double worst = 0.0;
    double prev = 1.0;
    bool monotone = true;
    for (int r : {8, 16, 32, 64}) {
      ArchitectureSpec spec;
      spec.depth = 2;
      spec.expert_counts = {4, 4};
      spec.ranks = {r, r};
      spec.fanouts = {2, 2};
      spec.base_dim = 2048;
      spec.output_dim = 2048;
      spec.gate = GateType::noisy_topk;
      spec.router_down_dim = 24;
      spec.router_key_dim = 16;
      const double ratio = router_cost_ratio(spec);
      worst = std::max(worst, ratio);
      if (ratio >= 0.26) ok = false;
      if (ratio >= prev) monotone = false;
      prev = ratio;
    }
    results.push_back({"router cost ratio < 0.26 and decreasing in rank", ok && monotone,
                       "max ratio " + fmt(worst) + " < 0.26"});
  }

  return results;
}

// --------------------------------------------------------------------------
// structural invariants
// --------------------------------------------------------------------------

std::vector<CheckResult> verify_invariants(std::uint64_t seed) {
  std::vector<CheckResult> results;
  RngState rng(seed);

  {
    ArchitectureSpec spec;
    spec.depth = 2;
    spec.expert_counts = {4, 4};
    spec.ranks = {3, 3};
    spec.fanouts = {2, 2};
    spec.base_dim = 10;
    spec.output_dim = 10;
    spec.activation = Activation::relu;
    spec.gate = GateType::noisy_topk;
    ExpertBank bank = random_bank(spec, rng);

    bool identical = true;
    for (int trial = 0; trial < 50; ++trial) {
      const Vector x = random_vector(10, rng);
      RngState r1(42);
      const RouteResult route = route_topdown(x, bank, r1, RouteMode::eval);
      const Vector base = forward_smore(x, route.tree, bank, false).first;
      RoutingTree shuffled = route.tree;
      auto shuffle_rec = [&](auto&& self, std::vector<TreeNode>& nodes) -> void {
        for (std::size_t i = nodes.size(); i > 1; --i)
          std::swap(nodes[i - 1], nodes[rng.next_u64() % i]);
        for (auto& n : nodes) self(self, n.children);
      };
      shuffle_rec(shuffle_rec, shuffled.roots);
      const Vector permuted = forward_smore(x, shuffled, bank, false).first;
      if (base != permuted) identical = false;
    }
    results.push_back({"child permutation leaves outputs bit-identical", identical, "50 trees"});
  }

  {
    ArchitectureSpec spec;
    spec.depth = 2;
    spec.expert_counts = {4, 4};
    spec.ranks = {4, 4};
    spec.fanouts = {2, 2};
    spec.base_dim = 12;
    spec.output_dim = 12;
    spec.activation = Activation::relu;
    spec.gate = GateType::noisy_topk;
    ExpertBank bank = init_bank(spec, rng);  // up projections stay zero
    bool all_zero = true;
    for (int trial = 0; trial < 1000; ++trial) {
      const Vector x = random_vector(12, rng);
      RngState r(static_cast<std::uint64_t>(trial));
      auto [out, trace] = route_and_forward(x, bank, r, RouteMode::eval);
      (void)trace;
      for (double v : out)
        if (v != 0.0) all_zero = false;
    }
    results.push_back({"zero-initialized adapter is an exact no-op (1000 inputs)", all_zero, ""});
  }

  {
    // identity activation: the forward map is linear in the token
    ArchitectureSpec spec = discrimination_spec();
    const ExpertBank bank = random_bank(spec, rng);
    const auto trio = discrimination_trio();
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Vector x1 = random_vector(8, rng);
      const Vector x2 = random_vector(8, rng);
      const double a = rng.uniform(-2.0, 2.0);
      const double b = rng.uniform(-2.0, 2.0);
      Vector mix(8, 0.0);
      axpy(mix, a, x1);
      axpy(mix, b, x2);
      const Vector lhs = forward_smore(mix, trio[0], bank, true).first;
      Vector rhs(8, 0.0);
      axpy(rhs, a, forward_smore(x1, trio[0], bank, true).first);
      axpy(rhs, b, forward_smore(x2, trio[0], bank, true).first);
      worst = std::max(worst, max_rel_err(lhs, rhs));
    }
    results.push_back({"identity activation is linear in the token", worst < 1e-10,
                       "max rel err " + fmt(worst) + " tol 1e-10"});
  }

  return results;
}

std::vector<CheckResult> verify_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> results;
  auto append = [&](std::vector<CheckResult> more) {
    for (auto& r : more) results.push_back(std::move(r));
  };
  if (suite == "props" || suite == "all") append(verify_props(seed));
  if (suite == "theorems" || suite == "all") append(verify_theorems());
  if (suite == "gradients" || suite == "all") append(verify_gradients(seed));
  if (suite == "fig5" || suite == "all") append(verify_fig5(seed));
  if (suite == "all") {
    append(verify_costs());
    append(verify_invariants(seed));
  }
  if (results.empty()) throw ConfigError("unknown verify suite '" + suite + "'");
  return results;
}

}  // namespace smore
