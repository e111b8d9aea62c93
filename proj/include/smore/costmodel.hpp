#pragma once

#include <string>
#include <vector>

#include "smore/config.hpp"

namespace smore {

// Exact parameter / FLOP accounting. All counts are exact integers; FLOPs are
// multiply-accumulate pairs of each matrix-vector product (a p x q product
// costs p*q); element-wise additions and activations are excluded.
struct CostReport {
  long long d_inner = 0;       // d_L
  long long main = 0;          // 2 * d * d_L
  long long delta = 0;         // params: sum d_{l+1}^2; flops: sum F_l d_{l+1} (d_l + r_l)
  long long experts = 0;       // exact tensor sizes (variant-aware)
  long long mixers = 0;
  long long projection = 0;
  long long bias_params = 0;   // counted separately, never in the headline delta
  long long sigma_params = 0;
  long long router = 0;        // exact router tensor count / router flops per token
  long long adapter_total = 0; // experts + mixers + projection + bias + sigma
  long long total = 0;         // adapter_total + router
  double ratio = 0.0;          // delta / main
};

CostReport param_count(const ArchitectureSpec& spec);
CostReport flop_count(const ArchitectureSpec& spec);

// (router flops per token) / (expert propagation flops per token).
double router_cost_ratio(const ArchitectureSpec& spec);

struct CostRow {
  int rank;
  int depth;
  long long d_inner;
  long long main;
  long long delta;
  double ratio;
};

// One row per (rank, depth) with uniform s, f and every rank equal.
std::vector<CostRow> cost_table(const std::vector<std::pair<int, int>>& rows, int d, int s, int f,
                                bool flops);

// Table formatting used for golden-file comparison: main to one decimal in
// millions, delta to three decimals, ratio to one decimal percent.
std::string format_mega(long long value, int decimals);
std::string format_ratio(double ratio);
std::string cost_table_csv(const std::vector<CostRow>& rows);

}  // namespace smore
