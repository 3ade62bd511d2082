// protomp: prototype-augmented message passing experiments.
//
// Commands: train, ablate, analyze, generate, gradcheck. Reports are
// line-oriented key = value text; the only volatile line is the timestamp
// line, so re-runs with identical configs are byte-identical elsewhere.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protomp/config.hpp"
#include "protomp/data_io.hpp"
#include "protomp/gradcheck.hpp"
#include "protomp/graph.hpp"
#include "protomp/metrics.hpp"
#include "protomp/training.hpp"

namespace fs = std::filesystem;
using namespace protomp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;
constexpr int kExitDivergence = 4;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string timestamp_line(double elapsed_s) {
  std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return std::string("timestamp = ") + buf + " elapsed_s = " + fmt(elapsed_s);
}

std::string resolve_dataset(const std::string& name_or_path) {
  if (fs::exists(name_or_path) && fs::is_regular_file(name_or_path)) {
    return name_or_path;
  }
  std::vector<std::string> roots;
  if (const char* env = std::getenv("PROTO_MP_DATA_DIR")) roots.push_back(env);
  roots.push_back("data");
  for (const std::string& root : roots) {
    const std::string p = root + "/" + name_or_path + "/manifest.txt";
    if (fs::exists(p)) return p;
  }
  throw DataError("dataset not found: " + name_or_path);
}

void write_report(const std::string& out_dir, const std::string& command,
                  const std::string& body, double elapsed_s) {
  fs::create_directories(out_dir);
  std::ostringstream o;
  o << "protomp_report_version = 1\n";
  o << "command = " << command << "\n";
  o << timestamp_line(elapsed_s) << "\n";
  o << body;
  const std::string path = out_dir + "/" + command + "_report.txt";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << o.str();
  std::cout << o.str();
  std::cerr << "report written to " << path << "\n";
}

void append_segments(std::ostringstream& o, const SegmentReport& rep) {
  static const char* names[4] = {"shet", "whet", "whom", "shom"};
  for (int s = 0; s < 4; ++s) {
    if (rep.segments[s]) {
      o << names[s] << " = " << rep.segments[s]->count << " "
        << fmt(rep.segments[s]->acc()) << "\n";
    }
  }
  if (rep.isolated) {
    o << "isolated = " << rep.isolated->count << " "
      << fmt(rep.isolated->acc()) << "\n";
  }
  o << "overall = " << rep.total << " " << fmt(rep.overall()) << "\n";
}

std::vector<int> parse_seeds(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("--seeds: no seeds given");
  return out;
}

std::string seeds_csv(const std::vector<int>& seeds) {
  std::string s;
  for (size_t i = 0; i < seeds.size(); ++i) {
    s += (i ? "," : "") + std::to_string(seeds[i]);
  }
  return s;
}

struct TrainArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string dataset_override;
  std::string seeds_csv;
  long long seed_override = -1;
  bool export_embeddings = false;
  bool vs_backbone = false;
};

int cmd_train(const TrainArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed_override >= 0) cfg.seed = uint64_t(args.seed_override);
  if (!args.dataset_override.empty()) cfg.dataset = args.dataset_override;
  std::vector<int> seeds =
      args.seeds_csv.empty() ? std::vector<int>{int(cfg.seed)}
                             : parse_seeds(args.seeds_csv);
  cfg.seed = uint64_t(seeds[0]);

  DatasetManifest manifest = load_manifest(resolve_dataset(cfg.dataset));
  Graph base = load_dataset(manifest);

  std::ostringstream o;
  o << serialize_config(cfg);

  std::vector<double> test_accs, val_accs;
  std::vector<double> backbone_accs;
  fs::create_directories(args.out_dir);
  for (int seed : seeds) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.seed = uint64_t(seed);
    Graph g = split_for_seed(base, run_cfg, uint64_t(seed));
    RunResult res = fit(g, run_cfg);
    test_accs.push_back(res.test_accuracy);
    val_accs.push_back(res.best_val_accuracy);

    o << "[run seed=" << seed << "]\n";
    o << "best_val_accuracy = " << fmt(res.best_val_accuracy) << "\n";
    o << "test_accuracy = " << fmt(res.test_accuracy) << "\n";
    o << "best_epoch = " << res.best_epoch << "\n";
    o << "epochs_run = " << res.epochs_run << "\n";
    o << "final_train_loss = " << fmt(res.train_losses.back()) << "\n";
    if (!res.attention_pn_mean.empty()) {
      o << "attention_pn_mean =";
      for (double a : res.attention_pn_mean) o << " " << fmt(a);
      o << "\n";
    }
    if (!res.attention_pa_mean.empty()) {
      o << "attention_pa_mean =";
      for (double a : res.attention_pa_mean) o << " " << fmt(a);
      o << "\n";
    }
    o << "[segments seed=" << seed << "]\n";
    append_segments(o, segment_accuracy(res.predictions, g,
                                        g.split_indices(SplitTag::test)));

    if (args.export_embeddings) {
      export_embeddings(g, res.penultimate,
                        args.out_dir + "/embeddings_seed" +
                            std::to_string(seed) + ".tsv");
    }
    if (args.vs_backbone) {
      ExperimentConfig bb = run_cfg;
      bb.k_n = 0;
      bb.k_a = 0;
      backbone_accs.push_back(fit(g, bb).test_accuracy);
    }
  }

  o << "[aggregate]\n";
  o << "seeds = " << seeds_csv(seeds) << "\n";
  o << "test_mean = " << fmt(mean_of(test_accs)) << "\n";
  o << "test_std = " << fmt(sample_std(test_accs)) << "\n";
  o << "val_mean = " << fmt(mean_of(val_accs)) << "\n";
  if (args.vs_backbone) {
    o << "[baseline_ttest]\n";
    o << "backbone_test_mean = " << fmt(mean_of(backbone_accs)) << "\n";
    o << "backbone_test_std = " << fmt(sample_std(backbone_accs)) << "\n";
    if (seeds.size() >= 2) {
      TTestResult tt = paired_t_test(test_accs, backbone_accs);
      o << "p_value = " << fmt(tt.p) << "\n";
      o << "degenerate = " << (tt.degenerate ? 1 : 0) << "\n";
    } else {
      o << "p_value = 1\n";
      o << "degenerate = 0\n";
    }
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_report(args.out_dir, "train", o.str(), elapsed);
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& seeds_arg,
               const std::string& out_dir, const std::string& dataset_override) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(config_path);
  if (!dataset_override.empty()) cfg.dataset = dataset_override;
  const std::vector<int> seeds = parse_seeds(seeds_arg);

  DatasetManifest manifest = load_manifest(resolve_dataset(cfg.dataset));
  Graph base = load_dataset(manifest);
  AblationResult ab = run_ablation(base, cfg, seeds);
  if (ab.single_seed_warning) {
    std::cerr << "warning: single seed, reported std is 0\n";
  }

  std::ostringstream o;
  o << serialize_config(cfg);
  for (const AblationRow& row : ab.rows) {
    o << "[variant " << row.variant << "]\n";
    o << "seeds = " << seeds_csv(seeds) << "\n";
    o << "accs =";
    for (double a : row.test_accs) o << " " << fmt(a);
    o << "\n";
    o << "mean = " << fmt(row.mean) << "\n";
    o << "std = " << fmt(row.stddev) << "\n";
    if (row.variant != "backbone" && seeds.size() >= 2) {
      o << "p_vs_backbone = " << fmt(row.vs_backbone.p) << "\n";
      o << "degenerate = " << (row.vs_backbone.degenerate ? 1 : 0) << "\n";
    }
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_report(out_dir, "ablate", o.str(), elapsed);
  return kExitOk;
}

int cmd_analyze(const std::string& dataset, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  DatasetManifest manifest = load_manifest(resolve_dataset(dataset));
  Graph g = load_dataset(manifest);
  HomophilyStats hs = node_homophily(g);

  int seg_counts[4] = {0, 0, 0, 0};
  for (double r : hs.ratio) {
    if (r >= 0.0) seg_counts[size_t(segment_by_homophily(r))] += 1;
  }

  std::ostringstream o;
  o << "[dataset]\n";
  o << "name = " << manifest.name << "\n";
  o << "nodes = " << g.num_nodes << "\n";
  o << "edges = " << g.undirected_edge_count() << "\n";
  o << "feature_dim = " << g.feature_dim() << "\n";
  o << "classes = " << g.num_classes << "\n";
  o << "mean_node_homophily = " << fmt(hs.mean) << "\n";
  o << "edge_homophily = " << fmt(edge_homophily(g)) << "\n";
  o << "isolated = " << hs.isolated << "\n";
  o << "[segment_population]\n";
  o << "shet = " << seg_counts[0] << "\n";
  o << "whet = " << seg_counts[1] << "\n";
  o << "whom = " << seg_counts[2] << "\n";
  o << "shom = " << seg_counts[3] << "\n";
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_report(out_dir, "analyze", o.str(), elapsed);
  return kExitOk;
}

struct GenerateArgs {
  std::string out_dir;
  std::string name = "synthetic";
  int nodes = 400;
  int classes = 2;
  double homophily = 0.5;
  int dim = 16;
  double noise = 1.0;
  long long seed = 1;
};

int cmd_generate(const GenerateArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.nodes < 4 * a.classes || a.homophily < 0.0 || a.homophily > 1.0 ||
      a.dim < a.classes || a.classes < 2) {
    throw ConfigError("generate: invalid parameters");
  }
  Graph g = generate_planted_partition(a.nodes, a.classes, a.homophily, a.dim,
                                       a.noise, uint64_t(a.seed));
  const std::string dir = a.out_dir + "/" + a.name;
  fs::create_directories(dir);
  DatasetManifest m;
  m.name = a.name;
  m.nodes = g.num_nodes;
  m.feature_dim = g.feature_dim();
  m.classes = g.num_classes;
  m.edges_file = "edges.tsv";
  m.features_file = "features.tsv";
  m.labels_file = "labels.tsv";
  m.directed = false;
  m.l1_normalize = false;
  m.base_dir = dir;
  save_dataset(g, m);
  {
    std::ofstream f(dir + "/manifest.txt", std::ios::binary);
    if (!f) throw DataError("cannot write " + dir + "/manifest.txt");
    f << "name = " << m.name << "\n";
    f << "nodes = " << m.nodes << "\n";
    f << "feature_dim = " << m.feature_dim << "\n";
    f << "classes = " << m.classes << "\n";
    f << "edges_file = edges.tsv\n";
    f << "features_file = features.tsv\n";
    f << "labels_file = labels.tsv\n";
    f << "directed = false\n";
    f << "l1_normalize = false\n";
  }

  std::ostringstream o;
  o << "[generate]\n";
  o << "name = " << a.name << "\n";
  o << "nodes = " << a.nodes << "\n";
  o << "classes = " << a.classes << "\n";
  o << "target_edge_homophily = " << fmt(a.homophily) << "\n";
  o << "feature_dim = " << a.dim << "\n";
  o << "feature_noise = " << fmt(a.noise) << "\n";
  o << "seed = " << a.seed << "\n";
  o << "edges = " << g.undirected_edge_count() << "\n";
  o << "measured_edge_homophily = " << fmt(edge_homophily(g)) << "\n";
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_report(a.out_dir, "generate", o.str(), elapsed);
  return kExitOk;
}

int cmd_gradcheck(long long seed, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport rep = run_gradcheck_suite(uint64_t(seed));
  constexpr double kTol = 1e-4;

  std::ostringstream o;
  o << "[gradcheck]\n";
  for (const GradCheckEntry& e : rep.entries) {
    o << e.name << " = " << fmt(e.max_rel_err) << "\n";
  }
  o << "worst = " << fmt(rep.worst) << "\n";
  o << "worst_name = " << rep.worst_name << "\n";
  o << "tolerance = " << fmt(kTol) << "\n";
  o << "verdict = " << (rep.pass(kTol) ? "pass" : "fail") << "\n";
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_report(out_dir, "gradcheck", o.str(), elapsed);
  if (!rep.pass(kTol)) {
    std::cerr << "gradcheck FAILED: " << rep.worst_name << " error "
              << fmt(rep.worst) << "\n";
    return kExitCheckFailure;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prototype-augmented message passing GNN toolkit"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", train_args.config_path, "config file")
      ->required();
  train->add_option("--seed", train_args.seed_override, "seed override");
  train->add_option("--seeds", train_args.seeds_csv, "comma-separated seeds");
  train->add_option("--out", train_args.out_dir, "output directory");
  train->add_option("--dataset", train_args.dataset_override,
                    "dataset name or manifest path");
  train->add_flag("--export-embeddings", train_args.export_embeddings,
                  "write penultimate-layer embeddings");
  train->add_flag("--vs-backbone", train_args.vs_backbone,
                  "also run the plain backbone and report a paired t-test");

  std::string ab_config, ab_seeds, ab_out = ".", ab_dataset;
  CLI::App* ablate = app.add_subcommand("ablate", "backbone/+PN/+PN+PA study");
  ablate->add_option("--config", ab_config, "config file")->required();
  ablate->add_option("--seeds", ab_seeds, "comma-separated seeds")->required();
  ablate->add_option("--out", ab_out, "output directory");
  ablate->add_option("--dataset", ab_dataset, "dataset name or manifest path");

  std::string an_dataset, an_out = ".";
  CLI::App* analyze = app.add_subcommand("analyze", "dataset homophily report");
  analyze->add_option("--dataset", an_dataset, "dataset name or manifest path")
      ->required();
  analyze->add_option("--out", an_out, "output directory");

  GenerateArgs gen_args;
  CLI::App* generate =
      app.add_subcommand("generate", "planted-partition dataset files");
  generate->add_option("--out", gen_args.out_dir, "output directory")
      ->required();
  generate->add_option("--name", gen_args.name, "dataset name");
  generate->add_option("--nodes", gen_args.nodes, "node count");
  generate->add_option("--classes", gen_args.classes, "class count");
  generate->add_option("--homophily", gen_args.homophily,
                       "target edge homophily");
  generate->add_option("--dim", gen_args.dim, "feature dimension");
  generate->add_option("--noise", gen_args.noise, "feature noise scale");
  generate->add_option("--seed", gen_args.seed, "generator seed");

  long long gc_seed = 1;
  std::string gc_out = ".";
  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--seed", gc_seed, "sampling seed");
  gradcheck->add_option("--out", gc_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfigError : kExitOk;
  }

  try {
    if (*train) return cmd_train(train_args);
    if (*ablate) return cmd_ablate(ab_config, ab_seeds, ab_out, ab_dataset);
    if (*analyze) return cmd_analyze(an_dataset, an_out);
    if (*generate) return cmd_generate(gen_args);
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitDataError;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  }
  return kExitOk;
}
