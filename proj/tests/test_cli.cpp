#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "protomp/config.hpp"
#include "report_schema.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("PROTOMP_CLI");
  REQUIRE_MESSAGE(p != nullptr, "PROTOMP_CLI not set");
  return p;
}

std::string repo_root() {
  const char* r = std::getenv("PROTOMP_REPO");
  REQUIRE_MESSAGE(r != nullptr, "PROTOMP_REPO not set");
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("protomp_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str() const { return path.string(); }
};

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), ("cannot open " + path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string toy_config(const TempDir& dir, int max_epochs = 8) {
  const std::string root = repo_root();
  std::ostringstream cfg;
  cfg << "[model]\nbackbone = gcn\nlayers = 2\nhidden = 4\nk_n = 2\nk_a = 2\n";
  cfg << "[loss]\nlambda_align = 0.01\nlambda_div = 0.01\nlambda_sparse = 0.001\n";
  cfg << "[train]\nmax_epochs = " << max_epochs << "\npatience = 20\nseed = 1\n";
  cfg << "[data]\ndataset = " << root << "/data/toy/manifest.txt\n";
  cfg << "split_mode = fixed_file\nsplit_file = " << root
      << "/data/toy/split.tsv\n";
  const std::string path = (dir.path / "toy.cfg").string();
  std::ofstream f(path);
  f << cfg.str();
  return path;
}

}  // namespace

TEST_CASE("missing config file exits 2 and names the path") {
  TempDir dir;
  const std::string missing = dir.str() + "/nope.cfg";
  const std::string cmd = cli_path() + " train --config " + missing +
                          " --out " + dir.str() + " 2>" + dir.str() +
                          "/err.txt >/dev/null";
  const int rc = WEXITSTATUS(std::system(cmd.c_str()));
  CHECK(rc == 2);
  CHECK(slurp(dir.str() + "/err.txt").find(missing) != std::string::npos);
}

TEST_CASE("unknown dataset exits 3") {
  TempDir dir;
  std::string cfg = toy_config(dir);
  CHECK(run("train --config " + cfg + " --dataset no_such_dataset --out " +
            dir.str()) == 3);
}

TEST_CASE("train smoke run on the toy fixture") {
  TempDir dir;
  std::string cfg = toy_config(dir, 5);
  CHECK(run("train --config " + cfg + " --out " + dir.str()) == 0);
  const std::string text = slurp(dir.str() + "/train_report.txt");
  CHECK(report_schema::check(text) == "");
  report_schema::Report rep;
  REQUIRE(report_schema::validate(text, &rep) == "");
  int run_sections = 0;
  for (const auto& [sec, _] : rep.sections) {
    run_sections += sec.rfind("run seed=", 0) == 0;
  }
  CHECK(run_sections == 1);
}

TEST_CASE("seed override changes only the seed field of the echoed config") {
  TempDir dir1, dir2;
  std::string cfg = toy_config(dir1);
  CHECK(run("train --config " + cfg + " --out " + dir1.str()) == 0);
  CHECK(run("train --config " + cfg + " --seed 9 --out " + dir2.str()) == 0);
  const std::string ta = slurp(dir1.str() + "/train_report.txt");
  const std::string tb = slurp(dir2.str() + "/train_report.txt");
  report_schema::Report a, b;
  REQUIRE(report_schema::validate(ta, &a) == "");
  REQUIRE(report_schema::validate(tb, &b) == "");
  CHECK(report_schema::find_section(a, "train")->at("seed") == "1");
  CHECK(report_schema::find_section(b, "train")->at("seed") == "9");
  // the echo differs only on its seed line
  std::string ea = report_schema::extract_config(ta);
  std::string eb = report_schema::extract_config(tb);
  const auto drop_seed = [](std::string s) {
    const size_t at = s.find("\nseed = ");
    const size_t end = s.find('\n', at + 1);
    return s.substr(0, at) + s.substr(end);
  };
  CHECK(ea != eb);
  CHECK(drop_seed(ea) == drop_seed(eb));
}

TEST_CASE("the config echo round-trips") {
  TempDir dir;
  std::string cfg = toy_config(dir, 3);
  REQUIRE(run("train --config " + cfg + " --out " + dir.str()) == 0);
  const std::string echo = report_schema::extract_config(
      slurp(dir.str() + "/train_report.txt"));
  protomp::ExperimentConfig parsed = protomp::parse_config(echo);
  CHECK(protomp::serialize_config(parsed) == echo);
}

TEST_CASE("reports are byte-identical modulo the timestamp line") {
  TempDir dir1, dir2;
  std::string cfg = toy_config(dir1);
  REQUIRE(run("train --config " + cfg + " --out " + dir1.str()) == 0);
  REQUIRE(run("train --config " + cfg + " --out " + dir2.str()) == 0);
  CHECK(report_schema::strip_timestamp(slurp(dir1.str() + "/train_report.txt")) ==
        report_schema::strip_timestamp(slurp(dir2.str() + "/train_report.txt")));
}

TEST_CASE("ablate produces the three-variant table") {
  TempDir dir;
  std::string cfg = toy_config(dir, 4);
  CHECK(run("ablate --config " + cfg + " --seeds 1,2 --out " + dir.str()) == 0);
  const std::string text = slurp(dir.str() + "/ablate_report.txt");
  CHECK(report_schema::check(text) == "");
  report_schema::Report rep;
  REQUIRE(report_schema::validate(text, &rep) == "");
  const auto* pn = report_schema::find_section(rep, "variant pn");
  REQUIRE(pn != nullptr);
  CHECK(pn->count("p_vs_backbone") == 1);
}

TEST_CASE("analyze reports the toy fixture statistics") {
  TempDir dir;
  CHECK(run("analyze --dataset " + repo_root() + "/data/toy/manifest.txt" +
            " --out " + dir.str()) == 0);
  const std::string text = slurp(dir.str() + "/analyze_report.txt");
  CHECK(report_schema::check(text) == "");
  report_schema::Report rep;
  REQUIRE(report_schema::validate(text, &rep) == "");
  const auto* ds = report_schema::find_section(rep, "dataset");
  REQUIRE(ds != nullptr);
  CHECK(ds->at("nodes") == "3");
  CHECK(ds->at("edges") == "2");
  CHECK(ds->at("feature_dim") == "2");
  CHECK(ds->at("classes") == "2");
}

TEST_CASE("analyze of an all-same-label fixture reports homophily 1") {
  TempDir dir;
  // build a one-label dataset in place
  const std::string d = dir.str();
  std::ofstream(d + "/edges.tsv") << "0\t1\n1\t2\n";
  std::ofstream(d + "/features.tsv") << "0\t1\n1\t1\n2\t1\n";
  std::ofstream(d + "/labels.tsv") << "0\t4\n1\t4\n2\t4\n";
  std::ofstream(d + "/manifest.txt")
      << "name = same\nnodes = 3\nfeature_dim = 1\nclasses = 1\n"
      << "edges_file = edges.tsv\nfeatures_file = features.tsv\n"
      << "labels_file = labels.tsv\ndirected = false\n";
  CHECK(run("analyze --dataset " + d + "/manifest.txt --out " + d) == 0);
  report_schema::Report rep;
  REQUIRE(report_schema::validate(slurp(d + "/analyze_report.txt"), &rep) == "");
  CHECK(std::stod(report_schema::find_section(rep, "dataset")
                      ->at("mean_node_homophily")) == 1.0);
}

TEST_CASE("generate writes reloadable deterministic files") {
  TempDir dir1, dir2;
  const std::string args =
      "generate --name synth --nodes 120 --classes 2 --homophily 0.8 "
      "--dim 4 --noise 0.5 --seed 1 --out ";
  CHECK(run(args + dir1.str()) == 0);
  CHECK(run(args + dir2.str()) == 0);
  for (const char* f :
       {"/synth/edges.tsv", "/synth/features.tsv", "/synth/labels.tsv",
        "/synth/manifest.txt"}) {
    CHECK(slurp(dir1.str() + f) == slurp(dir2.str() + f));
  }
  CHECK(report_schema::check(slurp(dir1.str() + "/generate_report.txt")) == "");

  // generated files reload and analyze near the target homophily
  TempDir out3;
  CHECK(run("analyze --dataset " + dir1.str() + "/synth/manifest.txt --out " +
            out3.str()) == 0);
  report_schema::Report rep;
  REQUIRE(report_schema::validate(slurp(out3.str() + "/analyze_report.txt"),
                                  &rep) == "");
  const double eh = std::stod(
      report_schema::find_section(rep, "dataset")->at("edge_homophily"));
  CHECK(eh > 0.7);
  CHECK(eh < 0.9);
  CHECK(report_schema::find_section(rep, "dataset")->at("nodes") == "120");
}

TEST_CASE("generate rejects invalid parameters with exit 2") {
  TempDir dir;
  CHECK(run("generate --nodes 10 --classes 7 --out " + dir.str()) == 2);
  CHECK(run("generate --homophily 1.5 --out " + dir.str()) == 2);
}

TEST_CASE("gradcheck passes and its seed only varies the samples") {
  TempDir dir1, dir2;
  CHECK(run("gradcheck --seed 1 --out " + dir1.str()) == 0);
  CHECK(run("gradcheck --seed 2 --out " + dir2.str()) == 0);
  for (const TempDir* d : {&dir1, &dir2}) {
    const std::string text = slurp(d->str() + "/gradcheck_report.txt");
    CHECK(report_schema::check(text) == "");
    report_schema::Report rep;
    REQUIRE(report_schema::validate(text, &rep) == "");
    CHECK(report_schema::find_section(rep, "gradcheck")->at("verdict") ==
          "pass");
  }
}

TEST_CASE("export-embeddings writes one row per node plus a header") {
  TempDir dir;
  std::string cfg = toy_config(dir, 3);
  CHECK(run("train --config " + cfg + " --out " + dir.str() +
            " --export-embeddings") == 0);
  const std::string text = slurp(dir.str() + "/embeddings_seed1.tsv");
  int lines = 0;
  for (char c : text) lines += (c == '\n');
  CHECK(lines == 4);
}
