#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "protomp/losses.hpp"

namespace protomp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Backbone { gcn, sgc };
const char* backbone_name(Backbone b);

struct SplitSpec {
  enum class Mode { random_fraction, fixed_file };
  Mode mode = Mode::random_fraction;
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  uint64_t seed = 0;      // combined with the run seed for per-run splits
  std::string file;       // fixed_file mode: node -> tag listing
  void validate() const;
};

struct ExperimentConfig {
  Backbone backbone = Backbone::gcn;
  int num_layers = 2;     // propagation power for the sgc backbone
  int hidden = 16;
  int k_n = 0;            // 0 disables prototypes-as-neighbors
  int k_a = 0;            // 0 disables message alignment
  double lambda_align = 0.0;
  double lambda_div = 0.0;
  double lambda_sparse = 0.0;
  DiversityAxis div_axis = DiversityAxis::samples;
  double temperature = 2.0;
  double lr = 0.01;
  double weight_decay = 5e-4;
  int max_epochs = 1000;
  int patience = 100;
  double dropout = 0.5;
  uint64_t seed = 1;
  std::string dataset;
  SplitSpec split;

  LossWeights loss_weights() const {
    return LossWeights{lambda_align, lambda_div, lambda_sparse, div_axis};
  }
  bool use_pn() const { return k_n > 0; }
  bool use_pa() const { return k_a > 0; }
  void validate() const;
};

// Flat key=value text with [model]/[loss]/[train]/[data] sections.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Canonical form; parse_config(serialize_config(c)) reproduces c exactly
// (doubles are printed with 17 significant digits).
std::string serialize_config(const ExperimentConfig& c);

// The paper's hyperparameter grid: K in {2,4,8,16,32,64}, lambdas in
// {1e-4, 1e-3, 1e-2, 1e-1, 1}. Seeded random search over it.
std::vector<ExperimentConfig> random_search_configs(
    const ExperimentConfig& base, int count, uint64_t seed);

}  // namespace protomp
