#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protomp/config.hpp"
#include "protomp/graph.hpp"
#include "protomp/layers.hpp"

namespace protomp {

// Adaptive-moment optimizer state with decoupled weight decay. Decay applies
// only to parameters flagged decay (transform matrices), never to prototypes
// or gates.
struct OptimizerState {
  double lr = 0.01;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int step_count = 0;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments

  void init(const std::vector<Param*>& params);
};

void adam_step(OptimizerState& state, const std::vector<Param*>& params);

struct RunResult {
  double best_val_accuracy = 0.0;
  double test_accuracy = 0.0;  // at the best-validation epoch, exactly once
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<double> train_losses;
  std::vector<double> attention_pn_mean;  // per layer, at the best epoch
  std::vector<double> attention_pa_mean;
  std::vector<int> predictions;           // all nodes, at the best epoch
  Tensor penultimate;                     // node rows, at the best epoch
  uint64_t final_param_checksum = 0;
  double wall_seconds = 0.0;
};

// Cross-entropy over the masked nodes plus the weighted prototype
// regularizers of the model's configuration.
Var model_training_loss(Tape& t, const P2Model& model, const ForwardPass& fp,
                        const std::vector<int>& labels,
                        const std::vector<int>& train_mask);

// Seeded full-batch training with early stopping on validation accuracy.
// Deterministic given cfg (metrics are bitwise reproducible). The graph must
// carry train/val/test tags. Throws DivergenceError on non-finite loss.
RunResult fit(const Graph& g, const ExperimentConfig& cfg);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  // Zero variance of differences: p = 1 when the mean difference is zero,
  // p = 0 (flagged) for a constant nonzero shift.
  bool degenerate = false;
};

// Two-sided paired t-test; inputs are paired by position (seed).
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

struct AblationRow {
  std::string variant;  // "backbone", "pn", "pn_pa"
  std::vector<double> test_accs;  // seed order
  double mean = 0.0;
  double stddev = 0.0;  // sample std; 0 for a single seed (warned)
  TTestResult vs_backbone;  // meaningful for the prototype rows
};

struct AblationResult {
  std::vector<AblationRow> rows;  // fixed order: backbone, pn, pn_pa
  std::vector<int> seeds;
  bool single_seed_warning = false;
};

// Runs {backbone, +P_N, +P_N+P_A} per seed over per-seed splits of g.
// g must be unsplit or its tags are replaced; splits pair by seed.
AblationResult run_ablation(const Graph& g, const ExperimentConfig& base,
                            const std::vector<int>& seeds);

// Per-seed split derivation shared by the trainers: random_fraction mode
// splits with seed spec.seed + run_seed; fixed_file mode is seed-invariant.
Graph split_for_seed(const Graph& g, const ExperimentConfig& cfg,
                     uint64_t run_seed);

double mean_of(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);

}  // namespace protomp
