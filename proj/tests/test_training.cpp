#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "linalg_oracle.hpp"
#include "protomp/data_io.hpp"
#include "protomp/metrics.hpp"
#include "protomp/training.hpp"

using namespace protomp;

namespace {

Param scalar_param(double value) {
  Param p;
  p.name = "w";
  p.value = Tensor(1, 1, value);
  p.grad = Tensor(1, 1, 0.0);
  return p;
}

// Test-only oracle: logistic regression on raw features by full-batch
// gradient descent, evaluated on the test tags.
double logistic_oracle_accuracy(const Graph& g) {
  const int d = g.feature_dim();
  std::vector<double> w(size_t(d) + 1, 0.0);
  const auto train = g.split_indices(SplitTag::train);
  const auto test = g.split_indices(SplitTag::test);
  for (int it = 0; it < 800; ++it) {
    std::vector<double> grad(size_t(d) + 1, 0.0);
    for (int i : train) {
      double z = w[size_t(d)];
      for (int j = 0; j < d; ++j) z += w[size_t(j)] * g.features.at(i, j);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - double(g.labels[size_t(i)]);
      for (int j = 0; j < d; ++j) grad[size_t(j)] += err * g.features.at(i, j);
      grad[size_t(d)] += err;
    }
    for (size_t j = 0; j < w.size(); ++j) {
      w[j] -= 0.5 / double(train.size()) * grad[j];
    }
  }
  int correct = 0;
  for (int i : test) {
    double z = w[size_t(d)];
    for (int j = 0; j < d; ++j) z += w[size_t(j)] * g.features.at(i, j);
    correct += ((z > 0.0) == (g.labels[size_t(i)] == 1));
  }
  return double(correct) / double(test.size());
}

Graph separable_graph(uint64_t seed) {
  Graph g = generate_planted_partition(200, 2, 0.9, 4, 0.3, seed);
  SplitSpec spec;
  spec.seed = seed;
  return make_split(g, spec).graph;
}

ExperimentConfig backbone_config() {
  ExperimentConfig cfg;
  cfg.backbone = Backbone::gcn;
  cfg.num_layers = 2;
  cfg.hidden = 16;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
  Param p = scalar_param(0.37);
  std::vector<Param*> params = {&p};
  OptimizerState st;
  st.lr = 0.1;
  st.weight_decay = 0.0;
  st.init(params);
  for (int i = 0; i < 5; ++i) adam_step(st, params);
  CHECK(p.value.at(0, 0) == 0.37);
}

TEST_CASE("adam: single step on unit gradient moves by about lr") {
  Param p = scalar_param(1.0);
  p.grad.at(0, 0) = 1.0;
  std::vector<Param*> params = {&p};
  OptimizerState st;
  st.lr = 0.1;
  st.init(params);
  adam_step(st, params);
  CHECK(std::fabs(p.value.at(0, 0) - 0.9) < 1e-8);
}

TEST_CASE("adam: constant gradient step size approaches lr") {
  Param p = scalar_param(0.0);
  std::vector<Param*> params = {&p};
  OptimizerState st;
  st.lr = 0.01;
  st.init(params);
  double prev = p.value.at(0, 0);
  double step = 0.0;
  for (int i = 0; i < 500; ++i) {
    p.grad.at(0, 0) = 2.5;
    adam_step(st, params);
    step = prev - p.value.at(0, 0);
    prev = p.value.at(0, 0);
  }
  CHECK(std::fabs(step - st.lr) < 1e-4);
}

TEST_CASE("adam: decoupled decay only touches flagged parameters") {
  Param decayed = scalar_param(1.0);
  decayed.decay = true;
  Param exempt = scalar_param(1.0);
  std::vector<Param*> params = {&decayed, &exempt};
  OptimizerState st;
  st.lr = 0.1;
  st.weight_decay = 0.5;
  st.init(params);
  adam_step(st, params);
  CHECK(decayed.value.at(0, 0) == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(exempt.value.at(0, 0) == 1.0);
}

TEST_CASE("paired t-test conventions and oracle agreement") {
  SUBCASE("identical samples give p = 1") {
    TTestResult r = paired_t_test({0.5, 0.6, 0.7}, {0.5, 0.6, 0.7});
    CHECK(r.p == 1.0);
    CHECK_FALSE(r.degenerate);
  }
  SUBCASE("constant nonzero shift gives p = 0 with the degenerate flag") {
    TTestResult r = paired_t_test({2.0, 3.0, 4.0, 5.0, 6.0},
                                  {1.0, 2.0, 3.0, 4.0, 5.0});
    CHECK(r.p == 0.0);
    CHECK(r.degenerate);
  }
  SUBCASE("length mismatch and tiny samples are rejected") {
    CHECK_THROWS_AS(paired_t_test({1, 2}, {1}), std::invalid_argument);
    CHECK_THROWS_AS(paired_t_test({1}, {1}), std::invalid_argument);
  }
  SUBCASE("matches a direct quadrature of the t density") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> a, b;
      const int n = 5 + int(rng.below(8));
      for (int i = 0; i < n; ++i) {
        a.push_back(rng.normal());
        b.push_back(rng.normal() + 0.3);
      }
      TTestResult r = paired_t_test(a, b);
      const double oracle =
          test_oracle::t_pvalue_by_quadrature(r.t, double(n - 1));
      CHECK(std::fabs(r.p - oracle) < 1e-10);
    }
  }
}

TEST_CASE("fit is deterministic and checksums repeat") {
  Graph g = separable_graph(4);
  ExperimentConfig cfg = backbone_config();
  cfg.max_epochs = 5;
  cfg.patience = 10;
  RunResult a = fit(g, cfg);
  RunResult b = fit(g, cfg);
  CHECK(a.final_param_checksum == b.final_param_checksum);
  CHECK(a.test_accuracy == b.test_accuracy);
  CHECK(a.best_val_accuracy == b.best_val_accuracy);
  CHECK(a.train_losses == b.train_losses);
}

TEST_CASE("fit learns the separable synthetic graph") {
  Graph g = separable_graph(7);
  CHECK(logistic_oracle_accuracy(g) >= 0.95);  // separability oracle
  ExperimentConfig cfg = backbone_config();
  RunResult res = fit(g, cfg);
  CHECK(res.test_accuracy >= 0.95);
  CHECK(res.epochs_run <= 200);
}

TEST_CASE("training loss drops over the first fifty epochs") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Graph g = separable_graph(seed);
    ExperimentConfig cfg = backbone_config();
    cfg.seed = seed;
    cfg.max_epochs = 60;
    RunResult res = fit(g, cfg);
    REQUIRE(res.train_losses.size() >= 50);
    CHECK(res.train_losses[49] < res.train_losses[0]);
  }
}

TEST_CASE("full-batch descent on a tiny graph with a small learning rate") {
  Graph g;
  g.num_nodes = 10;
  for (int i = 0; i < 10; ++i) {
    g.edges.push_back({i, (i + 1) % 10});
    g.edges.push_back({(i + 1) % 10, i});
  }
  Rng frng(5);
  g.features = Tensor(10, 3);
  for (double& x : g.features.v) x = frng.uniform(-1.0, 1.0);
  g.num_classes = 2;
  g.labels.resize(10);
  for (int i = 0; i < 10; ++i) g.labels[size_t(i)] = i % 2;
  g.split.assign(10, SplitTag::train);
  g.split[8] = SplitTag::val;
  g.split[9] = SplitTag::test;
  ExperimentConfig cfg;
  cfg.hidden = 4;
  cfg.dropout = 0.0;
  cfg.weight_decay = 0.0;
  cfg.lr = 1e-3;
  cfg.max_epochs = 21;
  cfg.patience = 50;
  RunResult res = fit(g, cfg);
  REQUIRE(res.train_losses.size() == 21);
  for (int i = 0; i < 20; ++i) {
    CHECK(res.train_losses[size_t(i + 1)] < res.train_losses[size_t(i)]);
  }
}

TEST_CASE("test metric always comes from the best-validation epoch") {
  Graph g = separable_graph(11);
  ExperimentConfig cfg = backbone_config();
  cfg.max_epochs = 60;
  RunResult full = fit(g, cfg);
  // truncating the run at the best epoch reproduces the same test metric
  ExperimentConfig cut = cfg;
  cut.max_epochs = full.best_epoch;
  RunResult trunc = fit(g, cut);
  CHECK(trunc.best_epoch == full.best_epoch);
  CHECK(trunc.test_accuracy == full.test_accuracy);
  CHECK(full.best_epoch <= full.epochs_run);
}

TEST_CASE("empty split is rejected") {
  Graph g = generate_planted_partition(20, 2, 0.5, 3, 0.5, 2);
  g.split.assign(20, SplitTag::train);
  ExperimentConfig cfg;
  cfg.max_epochs = 2;
  CHECK_THROWS_AS(fit(g, cfg), DataError);
}

TEST_CASE("divergence aborts with a diagnostic") {
  Graph g = separable_graph(13);
  ExperimentConfig cfg = backbone_config();
  cfg.lr = 1e18;  // guaranteed blow-up
  cfg.max_epochs = 50;
  CHECK_THROWS_AS(fit(g, cfg), DivergenceError);
}

TEST_CASE("ablation rows, ordering and degenerate statistics") {
  Graph g = generate_planted_partition(60, 2, 0.3, 4, 0.6, 21);
  ExperimentConfig cfg;
  cfg.hidden = 8;
  cfg.k_n = 2;
  cfg.k_a = 2;
  cfg.lambda_align = 0.01;
  cfg.lambda_div = 0.01;
  cfg.lambda_sparse = 0.001;
  cfg.max_epochs = 15;
  cfg.patience = 20;

  SUBCASE("fixed variant order with two seeds") {
    AblationResult ab = run_ablation(g, cfg, {1, 2});
    REQUIRE(ab.rows.size() == 3);
    CHECK(ab.rows[0].variant == "backbone");
    CHECK(ab.rows[1].variant == "pn");
    CHECK(ab.rows[2].variant == "pn_pa");
    CHECK_FALSE(ab.single_seed_warning);
    for (const auto& row : ab.rows) CHECK(row.test_accs.size() == 2);
  }
  SUBCASE("single seed warns and reports zero std") {
    AblationResult ab = run_ablation(g, cfg, {1});
    CHECK(ab.single_seed_warning);
    CHECK(ab.rows[0].stddev == 0.0);
  }
  SUBCASE("prototype-less base config is rejected") {
    ExperimentConfig bad = cfg;
    bad.k_n = 0;
    CHECK_THROWS_AS(run_ablation(g, bad, {1, 2}), ConfigError);
  }
}

TEST_CASE("plain backbone run is reproduced by the prototype model with everything off") {
  Graph g = separable_graph(19);
  ExperimentConfig cfg = backbone_config();
  cfg.max_epochs = 10;
  cfg.k_n = 0;
  cfg.k_a = 0;
  cfg.lambda_align = 0.0;
  cfg.lambda_div = 0.0;
  cfg.lambda_sparse = 0.0;
  RunResult a = fit(g, cfg);
  RunResult b = fit(g, cfg);
  CHECK(a.final_param_checksum == b.final_param_checksum);
}
