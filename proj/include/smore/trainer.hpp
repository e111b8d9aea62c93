#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smore/experts.hpp"
#include "smore/propagate.hpp"

namespace smore {

// Clustered regression: inputs drawn around k well-separated centers, targets
// produced by per-cluster linear maps. A task where conditional computation
// provably helps, without any tokenizer machinery.
struct SyntheticTask {
  int clusters = 0;
  double noise = 0.0;
  std::vector<Vector> inputs;
  std::vector<Vector> targets;
  std::vector<int> assignment;

  int dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
};

// Deterministic per seed; cluster sizes balanced to +-1; centers rescaled if
// needed so the minimum pairwise distance is at least 4x the noise scale.
SyntheticTask gen_synthetic(std::uint64_t seed, int n, int k, int d, double noise);

struct StepRecord {
  int step = 0;
  double task_loss = 0.0;
  double aux_loss = 0.0;
  double grad_norm = 0.0;
  // fraction of batch tokens whose tree activated each expert, per pool
  std::vector<Vector> utilization;
  double util_min = 0.0;
  double util_max = 0.0;
};

struct TrainRun {
  ArchitectureSpec spec;
  std::vector<StepRecord> steps;
  ExpertBank final_bank;
};

struct TrainOptions {
  int steps = 2000;
  double lr = 0.1;
  int batch = 32;
  int threads = 1;  // >1 enables parallel batch evaluation with ordered merges
};

// Plain SGD on mean squared error plus the gate's auxiliary loss. Deterministic
// for fixed (spec, task, options, rng) regardless of the thread count: batch
// samples use per-(step, index) RNG substreams and gradients merge in index
// order. Throws (with the step index) if the loss exceeds 1e6.
TrainRun train(const ArchitectureSpec& spec, const SyntheticTask& task, const TrainOptions& options,
               RngState& rng);

struct PoolUtilization {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

// Per-pool expert utilization averaged over the last 10% of steps.
std::vector<PoolUtilization> utilization_report(const TrainRun& run);

std::string train_run_csv(const TrainRun& run);
std::string train_run_summary_json(const TrainRun& run);

}  // namespace smore
