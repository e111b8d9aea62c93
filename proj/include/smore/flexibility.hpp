#pragma once

#include <functional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "smore/experts.hpp"
#include "smore/router.hpp"

namespace smore {

// Flexibility counts overflow 64 bits quickly (6^(2^L - 1) at s=4, f=2), so
// everything here is exact arbitrary-precision arithmetic.
using BigCount = boost::multiprecision::cpp_int;

BigCount big_binomial(long long n, long long k);

// Number of non-isomorphic activated trees: prod_l C(s_l, f_l)^{F_{l+1}}.
BigCount gamma_smore(const ArchitectureSpec& spec);

// Upper bound for the flat multi-order baseline:
// C(s_{L-1}, f_{L-1}) * prod_{l<=L-2} sum_{i=f_l}^{min(F_l, s_l)} C(s_l, i).
BigCount gamma_momor_bound(const ArchitectureSpec& spec);

// Recursion for the child-activation variant:
// G_l = C(s_{l-1}, f_{l-1}) * C(G_{l-1} + f_{l-1} - 1, f_{l-1}), G_0 = 1.
BigCount gamma_smore_star(const ArchitectureSpec& spec);

// Shared-parameter variant: same product as gamma_smore with uniform (s, f).
BigCount gamma_smore_shared(const ArchitectureSpec& spec);

// Canonical representative of a tree's isomorphism class: the sorted set of
// the leaves' ancestral paths (expert indices from the top pool down).
using CanonicalTree = std::vector<std::vector<int>>;
CanonicalTree canonicalize(const RoutingTree& tree);

// Number of trees reachable by any router (every size-f subset at every node).
BigCount tree_space_size(const ArchitectureSpec& spec);

// Visits every reachable tree (unit gate weights, children in ascending
// order). Throws, naming the count, when the space exceeds the cap: sampled
// enumeration cannot certify exact equalities.
void enumerate_trees(const ArchitectureSpec& spec,
                     const std::function<void(const RoutingTree&)>& visit,
                     const BigCount& cap = BigCount(1000000));

// Distinct canonical forms over the full enumeration; the oracle that must
// equal gamma_smore exactly.
BigCount count_nonisomorphic(const ArchitectureSpec& spec, const BigCount& cap = BigCount(1000000));

// Distinct recursive (child expert set, child class multiset) signatures; the
// oracle that must equal gamma_smore_star exactly.
BigCount count_star_classes(const ArchitectureSpec& spec, const BigCount& cap = BigCount(1000000));

struct DistinctnessReport {
  BigCount classes;            // isomorphism classes enumerated
  BigCount distinct_outputs;   // distinct final embeddings observed
  double min_inter_class = 0;  // smallest inf-norm gap between class outputs
  double max_intra_class = 0;  // largest gap across child-permuted replicas
};

// Evaluates the bank (theory mode) on one representative per class plus
// shuffled replicas of several classes; distances measured on the final
// pre-projection embedding.
DistinctnessReport distinctness_report(const ArchitectureSpec& spec, const ExpertBank& bank,
                                       const BigCount& cap = BigCount(1000000));

struct FlexRow {
  int depth;
  BigCount smore;
  BigCount momor_bound;
  BigCount star;
  BigCount shared;
};

// Exact values for uniform (s, f) at depths 1..l_max.
std::vector<FlexRow> flexibility_table(int s, int f, int l_max);
std::string flexibility_table_csv(const std::vector<FlexRow>& rows);

// Uniform spec helper used by the table and the verification grids.
ArchitectureSpec uniform_spec(int s, int f, int depth);

}  // namespace smore
