#include "smore/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "smore/router.hpp"

namespace smore {

SyntheticTask gen_synthetic(std::uint64_t seed, int n, int k, int d, double noise) {
  if (k < 2) throw std::invalid_argument("gen_synthetic: need at least 2 clusters");
  if (n < k) throw std::invalid_argument("gen_synthetic: need at least one sample per cluster");
  RngState rng(seed);
  SyntheticTask task;
  task.clusters = k;
  task.noise = noise;

  std::vector<Vector> centers;
  for (int j = 0; j < k; ++j) {
    Vector c(static_cast<std::size_t>(d));
    for (double& v : c) v = rng.normal();
    centers.push_back(std::move(c));
  }
  // enforce the separation invariant deterministically
  double min_dist = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      Vector diff = centers[static_cast<std::size_t>(a)];
      axpy(diff, -1.0, centers[static_cast<std::size_t>(b)]);
      min_dist = std::min(min_dist, norm2(diff));
    }
  if (noise > 0.0 && min_dist < 4.0 * noise) {
    const double scale = (4.0 * noise / min_dist) * 1.05;
    for (auto& c : centers)
      for (double& v : c) v *= scale;
  }

  std::vector<Matrix> maps;
  for (int j = 0; j < k; ++j)
    maps.push_back(seeded_init(static_cast<std::size_t>(d), static_cast<std::size_t>(d),
                               InitScheme::uniform_scaled, rng));

  for (int i = 0; i < n; ++i) {
    const int j = i % k;
    Vector x = centers[static_cast<std::size_t>(j)];
    for (double& v : x) v += noise * rng.normal();
    task.targets.push_back(matvec(maps[static_cast<std::size_t>(j)], x));
    task.inputs.push_back(std::move(x));
    task.assignment.push_back(j);
  }
  return task;
}

namespace {

struct SampleResult {
  ForwardTrace trace;
  Vector grad_out;
  double loss = 0.0;
  GateStats stats;
  std::vector<std::set<int>> activated;  // per pool, experts present in the tree
};

void collect_activated(const RoutingTree& tree, std::vector<std::set<int>>& activated) {
  auto walk = [&](auto&& self, const std::vector<TreeNode>& nodes, int pool) -> void {
    for (const auto& n : nodes) {
      activated[static_cast<std::size_t>(pool)].insert(n.expert);
      self(self, n.children, pool - 1);
    }
  };
  walk(walk, tree.roots, tree.depth - 1);
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  const int workers = std::min(threads, n);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

TrainRun train(const ArchitectureSpec& spec, const SyntheticTask& task, const TrainOptions& options,
               RngState& rng) {
  validate_or_throw(spec);
  if (options.steps < 1) throw std::invalid_argument("train: steps must be at least 1");
  if (task.dim() != spec.base_dim)
    throw std::invalid_argument("train: task dimension does not match base_dim");
  if (static_cast<int>(task.targets.front().size()) != spec.output_dim)
    throw std::invalid_argument("train: target dimension does not match output_dim");

  ExpertBank bank = init_bank(spec, rng);
  const RngState master = rng.fork(0x7261696eull);  // stream tag for training noise

  TrainRun run;
  run.spec = spec;
  const int n = static_cast<int>(task.inputs.size());
  const int batch = std::min(options.batch, n);
  const double inv = 1.0 / (static_cast<double>(batch) * spec.output_dim);

  for (int step = 0; step < options.steps; ++step) {
    std::vector<SampleResult> samples(static_cast<std::size_t>(batch));
    const RngState step_rng = master.fork(static_cast<std::uint64_t>(step));

    parallel_for(batch, options.threads, [&](int b) {
      const int idx = (step * batch + b) % n;
      RngState tok_rng = step_rng.fork(static_cast<std::uint64_t>(b));
      SampleResult& res = samples[static_cast<std::size_t>(b)];
      auto [out, trace] =
          route_and_forward(task.inputs[static_cast<std::size_t>(idx)], bank, tok_rng,
                            RouteMode::train, &res.stats);
      res.activated.assign(static_cast<std::size_t>(spec.depth), {});
      collect_activated(trace.tree, res.activated);
      Vector diff = out;
      axpy(diff, -1.0, task.targets[static_cast<std::size_t>(idx)]);
      res.loss = dot(diff, diff) / spec.output_dim;
      res.grad_out.assign(diff.size(), 0.0);
      axpy(res.grad_out, 2.0 * inv, diff);
      res.trace = std::move(trace);
    });

    GateStats stats;
    double task_loss = 0.0;
    StepRecord record;
    record.step = step;
    record.utilization.assign(static_cast<std::size_t>(spec.depth), {});
    for (int l = 0; l < spec.depth; ++l)
      record.utilization[static_cast<std::size_t>(l)].assign(
          static_cast<std::size_t>(spec.expert_counts[static_cast<std::size_t>(l)]), 0.0);
    for (const auto& res : samples) {
      stats.merge(res.stats);
      task_loss += res.loss / batch;
      for (int l = 0; l < spec.depth; ++l)
        for (int e : res.activated[static_cast<std::size_t>(l)])
          record.utilization[static_cast<std::size_t>(l)][static_cast<std::size_t>(e)] +=
              1.0 / batch;
    }
    const double aux = aux_losses(stats, spec.balance_coeff);
    const AuxGrad aux_grad = aux_loss_gradient(stats, spec.balance_coeff);

    if (!std::isfinite(task_loss) || task_loss + aux > 1e6)
      throw std::runtime_error("train: divergence at step " + std::to_string(step));

    std::vector<ExpertBank> grads(static_cast<std::size_t>(batch));
    parallel_for(batch, options.threads, [&](int b) {
      const SampleResult& res = samples[static_cast<std::size_t>(b)];
      grads[static_cast<std::size_t>(b)] = backward(res.trace, res.grad_out, bank, &aux_grad);
    });
    ExpertBank total = std::move(grads[0]);
    for (int b = 1; b < batch; ++b) bank_axpy(total, 1.0, grads[static_cast<std::size_t>(b)]);

    record.task_loss = task_loss;
    record.aux_loss = aux;
    record.grad_norm = bank_norm2(total);
    record.util_min = 1.0;
    record.util_max = 0.0;
    for (const auto& pool : record.utilization)
      for (double u : pool) {
        record.util_min = std::min(record.util_min, u);
        record.util_max = std::max(record.util_max, u);
      }
    run.steps.push_back(std::move(record));

    bank_axpy(bank, -options.lr, total);
  }
  run.final_bank = std::move(bank);
  return run;
}

std::vector<PoolUtilization> utilization_report(const TrainRun& run) {
  std::vector<PoolUtilization> report(static_cast<std::size_t>(run.spec.depth));
  if (run.steps.empty()) return report;
  const std::size_t window = std::max<std::size_t>(1, run.steps.size() / 10);
  const std::size_t start = run.steps.size() - window;
  for (int l = 0; l < run.spec.depth; ++l) {
    const std::size_t s =
        static_cast<std::size_t>(run.spec.expert_counts[static_cast<std::size_t>(l)]);
    Vector mean(s, 0.0);
    for (std::size_t t = start; t < run.steps.size(); ++t)
      axpy(mean, 1.0 / static_cast<double>(window),
           run.steps[t].utilization[static_cast<std::size_t>(l)]);
    PoolUtilization& p = report[static_cast<std::size_t>(l)];
    p.min = *std::min_element(mean.begin(), mean.end());
    p.max = *std::max_element(mean.begin(), mean.end());
    p.mean = 0.0;
    for (double v : mean) p.mean += v / static_cast<double>(s);
  }
  return report;
}

std::string train_run_csv(const TrainRun& run) {
  std::ostringstream out;
  out << "step,task_loss,aux_loss,grad_norm,util_min,util_max\n";
  out.precision(17);
  for (const auto& s : run.steps) {
    out << s.step << "," << s.task_loss << "," << s.aux_loss << "," << s.grad_norm << ","
        << s.util_min << "," << s.util_max << "\n";
  }
  return out.str();
}

std::string train_run_summary_json(const TrainRun& run) {
  nlohmann::json j;
  j["objective"] = "mse_plus_balance";  // mean squared error stands in for the task loss
  j["steps"] = run.steps.size();
  if (!run.steps.empty()) {
    j["initial_task_loss"] = run.steps.front().task_loss;
    j["final_task_loss"] = run.steps.back().task_loss;
    j["final_aux_loss"] = run.steps.back().aux_loss;
  }
  nlohmann::json pools = nlohmann::json::array();
  for (const auto& p : utilization_report(run)) {
    pools.push_back({{"min", p.min}, {"max", p.max}, {"mean", p.mean}});
  }
  j["utilization_last_tenth"] = pools;
  j["balance_coeff"] = run.spec.balance_coeff;
  return j.dump(2);
}

}  // namespace smore
