#include "smore/costmodel.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace smore {

namespace {

long long query_net_params(const ArchitectureSpec& spec, int layer) {
  const long long m = spec.router_key_dim;
  const long long in = spec.router_down_dim + (spec.depth - 1 - layer) * m;
  if (m == 0 || in == 0) return 0;
  return m * in + m + m * m + m;  // w1, b1, w2, b2
}

long long router_params(const ArchitectureSpec& spec) {
  const long long m = spec.router_key_dim;
  long long total = static_cast<long long>(spec.router_down_dim) * spec.base_dim;
  for (int l = 0; l < spec.depth; ++l) {
    total += static_cast<long long>(spec.expert_counts[static_cast<std::size_t>(l)]) * m;
    if (spec.gate == GateType::noisy_topk)
      total += static_cast<long long>(spec.expert_counts[static_cast<std::size_t>(l)]) * m;
    total += query_net_params(spec, l);
  }
  if (spec.bottom_up) {
    const DimensionSchedule dims = dimension_schedule(spec);
    total += total_fanout(spec, 1) * spec.expert_counts[0] * spec.router_down_dim;
    for (int l = 1; l < spec.depth; ++l) {
      total += total_fanout(spec, l) * spec.router_down_dim;
      const long long s = spec.expert_counts[static_cast<std::size_t>(l)];
      const long long in = dims.at(l) + spec.router_down_dim;
      total += m * in + m + s * m + s;
    }
  }
  return total;
}

}  // namespace

CostReport param_count(const ArchitectureSpec& spec) {
  validate_or_throw(spec);
  const DimensionSchedule dims = dimension_schedule(spec);
  CostReport report;
  report.d_inner = dims.inner_dim();
  report.main = 2LL * spec.base_dim * report.d_inner;
  for (int l = 0; l < spec.depth; ++l)
    report.delta += static_cast<long long>(dims.at(l + 1)) * dims.at(l + 1);
  report.ratio = report.main > 0 ? static_cast<double>(report.delta) / static_cast<double>(report.main) : 0.0;

  const bool shared = spec.variant == Variant::smore_shared;
  const int param_layers = shared ? 1 : spec.depth;
  const int sigma_layers = spec.activation == Activation::mlp ? spec.depth : 0;
  for (int l = 0; l < param_layers; ++l) {
    const long long s = spec.expert_counts[static_cast<std::size_t>(l)];
    const long long r = spec.ranks[static_cast<std::size_t>(l)];
    report.experts += s * (r * spec.base_dim + static_cast<long long>(dims.at(l + 1)) * r);
    if (spec.bias_enabled) report.bias_params += s * dims.at(l + 1);
  }
  for (int l = 1; l < spec.depth; ++l)
    report.mixers += static_cast<long long>(dims.at(l + 1)) * dims.at(l);
  report.projection = static_cast<long long>(spec.output_dim) * report.d_inner;
  for (int l = 0; l < sigma_layers; ++l) {
    const long long d = dims.at(l + 1);
    const long long h = spec.mlp_hidden > 0 ? spec.mlp_hidden : d;
    report.sigma_params += h * d + h + d * h + d;
  }
  report.router = router_params(spec);
  report.adapter_total =
      report.experts + report.mixers + report.projection + report.bias_params + report.sigma_params;
  report.total = report.adapter_total + report.router;
  return report;
}

namespace {

long long expert_flops(const ArchitectureSpec& spec, const DimensionSchedule& dims) {
  long long total = static_cast<long long>(spec.output_dim) * dims.inner_dim();
  for (int l = 0; l < spec.depth; ++l) {
    const long long s = spec.expert_counts[static_cast<std::size_t>(l)];
    const long long r = spec.ranks[static_cast<std::size_t>(l)];
    const long long fl = total_fanout(spec, l);
    const long long distinct = std::min(s, fl);
    total += distinct * r * (spec.base_dim + dims.at(l + 1));
    total += fl * static_cast<long long>(dims.at(l)) * dims.at(l + 1);
  }
  return total;
}

long long router_flops(const ArchitectureSpec& spec) {
  const long long m = spec.router_key_dim;
  long long total = static_cast<long long>(spec.base_dim) * spec.router_down_dim;
  for (int l = 0; l < spec.depth; ++l) {
    const long long events = total_fanout(spec, l + 1);
    const long long in = spec.router_down_dim + (spec.depth - 1 - l) * m;
    long long per_event = in * m + m * m;  // query network
    per_event += static_cast<long long>(spec.expert_counts[static_cast<std::size_t>(l)]) * m;
    if (spec.gate == GateType::noisy_topk)
      per_event += static_cast<long long>(spec.expert_counts[static_cast<std::size_t>(l)]) * m;
    total += events * per_event;
  }
  return total;
}

}  // namespace

CostReport flop_count(const ArchitectureSpec& spec) {
  validate_or_throw(spec);
  const DimensionSchedule dims = dimension_schedule(spec);
  CostReport report;
  report.d_inner = dims.inner_dim();
  report.main = 2LL * spec.base_dim * report.d_inner;
  for (int l = 0; l < spec.depth; ++l) {
    const long long fl = total_fanout(spec, l);
    const long long r = spec.ranks[static_cast<std::size_t>(l)];
    report.delta += fl * dims.at(l + 1) * (dims.at(l) + r);
  }
  report.ratio = report.main > 0 ? static_cast<double>(report.delta) / static_cast<double>(report.main) : 0.0;
  report.router = router_flops(spec);
  report.adapter_total = expert_flops(spec, dims);
  report.total = report.adapter_total + report.router;
  return report;
}

double router_cost_ratio(const ArchitectureSpec& spec) {
  validate_or_throw(spec);
  const DimensionSchedule dims = dimension_schedule(spec);
  const long long expert = expert_flops(spec, dims);
  const long long router = router_flops(spec);
  if (expert == 0) return 0.0;
  return static_cast<double>(router) / static_cast<double>(expert);
}

std::vector<CostRow> cost_table(const std::vector<std::pair<int, int>>& rows, int d, int s, int f,
                                bool flops) {
  std::vector<CostRow> out;
  for (const auto& [rank, depth] : rows) {
    ArchitectureSpec spec;
    spec.depth = depth;
    spec.expert_counts.assign(static_cast<std::size_t>(depth), s);
    spec.ranks.assign(static_cast<std::size_t>(depth), rank);
    spec.fanouts.assign(static_cast<std::size_t>(depth), f);
    spec.base_dim = d;
    spec.output_dim = d;
    spec.gate = GateType::noisy_topk;
    const CostReport report = flops ? flop_count(spec) : param_count(spec);
    out.push_back(CostRow{rank, depth, report.d_inner, report.main, report.delta, report.ratio});
  }
  return out;
}

std::string format_mega(long long value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*fM", decimals, static_cast<double>(value) / 1e6);
  return buf;
}

std::string format_ratio(double ratio) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f%%", ratio * 100.0);
  return buf;
}

std::string cost_table_csv(const std::vector<CostRow>& rows) {
  std::ostringstream out;
  out << "r,L,d_L,main,delta,ratio\n";
  for (const auto& r : rows) {
    out << r.rank << "," << r.depth << "," << r.d_inner << "," << format_mega(r.main, 1) << ","
        << format_mega(r.delta, 3) << "," << format_ratio(r.ratio) << "\n";
  }
  return out.str();
}

}  // namespace smore
