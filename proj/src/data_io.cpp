#include "protomp/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "protomp/rng.hpp"

namespace protomp {

namespace {

std::string dirname_of(const std::string& path) {
  size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? std::string(".") : path.substr(0, slash);
}

std::string join(const std::string& dir, const std::string& file) {
  if (file.empty() || file.front() == '/') return file;
  return dir + "/" + file;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t' || c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

[[noreturn]] void line_error(const std::string& file, int lineno,
                             const std::string& what) {
  throw DataError(file + ":" + std::to_string(lineno) + ": " + what);
}

long long to_int(const std::string& file, int lineno, const std::string& s) {
  try {
    size_t pos = 0;
    long long x = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    line_error(file, lineno, "bad integer '" + s + "'");
  }
}

double to_double(const std::string& file, int lineno, const std::string& s) {
  try {
    size_t pos = 0;
    double x = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return x;
  } catch (const std::exception&) {
    line_error(file, lineno, "bad number '" + s + "'");
  }
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("manifest: cannot open " + path);
  DatasetManifest m;
  m.base_dir = dirname_of(path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos) line_error(path, lineno, "expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string v = trim(s.substr(eq + 1));
    if (key == "name") m.name = v;
    else if (key == "nodes") m.nodes = int(to_int(path, lineno, v));
    else if (key == "feature_dim") m.feature_dim = int(to_int(path, lineno, v));
    else if (key == "classes") m.classes = int(to_int(path, lineno, v));
    else if (key == "edges_file") m.edges_file = v;
    else if (key == "features_file") m.features_file = v;
    else if (key == "labels_file") m.labels_file = v;
    else if (key == "directed") m.directed = (v == "true" || v == "1");
    else if (key == "l1_normalize") m.l1_normalize = (v == "true" || v == "1");
    else line_error(path, lineno, "unknown key '" + key + "'");
  }
  if (m.nodes <= 0 || m.feature_dim <= 0 || m.classes <= 0) {
    throw DataError("manifest " + path + ": nodes/feature_dim/classes missing");
  }
  if (m.edges_file.empty() || m.features_file.empty() || m.labels_file.empty()) {
    throw DataError("manifest " + path + ": file paths missing");
  }
  return m;
}

Graph load_dataset(const DatasetManifest& m) {
  Graph g;
  g.num_nodes = m.nodes;

  // Features: node_id then feature_dim values, each node exactly once.
  const std::string fpath = join(m.base_dir, m.features_file);
  std::ifstream fin(fpath, std::ios::binary);
  if (!fin) throw DataError("dataset: cannot open " + fpath);
  g.features = Tensor(m.nodes, m.feature_dim);
  std::vector<bool> seen(size_t(m.nodes), false);
  std::string line;
  int lineno = 0;
  while (std::getline(fin, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (int(f.size()) != m.feature_dim + 1) {
      line_error(fpath, lineno,
                 "expected " + std::to_string(m.feature_dim + 1) + " fields, got " +
                     std::to_string(f.size()));
    }
    const long long id = to_int(fpath, lineno, f[0]);
    if (id < 0 || id >= m.nodes) line_error(fpath, lineno, "node id out of range");
    if (seen[size_t(id)]) line_error(fpath, lineno, "duplicate node id");
    seen[size_t(id)] = true;
    for (int j = 0; j < m.feature_dim; ++j) {
      g.features.at(int(id), j) = to_double(fpath, lineno, f[size_t(j) + 1]);
    }
  }
  for (int i = 0; i < m.nodes; ++i) {
    if (!seen[size_t(i)]) {
      throw DataError(fpath + ": node " + std::to_string(i) +
                      " missing (manifest declares " + std::to_string(m.nodes) +
                      " nodes)");
    }
  }
  if (m.l1_normalize) {
    for (int i = 0; i < m.nodes; ++i) {
      double s = 0.0;
      for (int j = 0; j < m.feature_dim; ++j) s += std::fabs(g.features.at(i, j));
      if (s > 0.0) {
        for (int j = 0; j < m.feature_dim; ++j) g.features.at(i, j) /= s;
      }
    }
  }

  // Labels: remapped to [0, C) by sorted raw value.
  const std::string lpath = join(m.base_dir, m.labels_file);
  std::ifstream lin(lpath, std::ios::binary);
  if (!lin) throw DataError("dataset: cannot open " + lpath);
  std::vector<long long> raw(size_t(m.nodes), 0);
  std::fill(seen.begin(), seen.end(), false);
  lineno = 0;
  while (std::getline(lin, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 2) line_error(lpath, lineno, "expected node_id<TAB>class");
    const long long id = to_int(lpath, lineno, f[0]);
    if (id < 0 || id >= m.nodes) line_error(lpath, lineno, "node id out of range");
    if (seen[size_t(id)]) line_error(lpath, lineno, "duplicate node id");
    seen[size_t(id)] = true;
    raw[size_t(id)] = to_int(lpath, lineno, f[1]);
  }
  for (int i = 0; i < m.nodes; ++i) {
    if (!seen[size_t(i)]) {
      throw DataError(lpath + ": label for node " + std::to_string(i) + " missing");
    }
  }
  std::vector<long long> uniq = raw;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (int(uniq.size()) != m.classes) {
    throw DataError(lpath + ": found " + std::to_string(uniq.size()) +
                    " classes, manifest declares " + std::to_string(m.classes));
  }
  std::map<long long, int> remap;
  for (size_t i = 0; i < uniq.size(); ++i) remap[uniq[i]] = int(i);
  g.labels.resize(size_t(m.nodes));
  for (int i = 0; i < m.nodes; ++i) g.labels[size_t(i)] = remap[raw[size_t(i)]];
  g.num_classes = m.classes;

  // Edges: dedupe, drop self-loops, symmetrize unless directed.
  const std::string epath = join(m.base_dir, m.edges_file);
  std::ifstream ein(epath, std::ios::binary);
  if (!ein) throw DataError("dataset: cannot open " + epath);
  std::set<std::pair<int, int>> es;
  lineno = 0;
  while (std::getline(ein, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 2) line_error(epath, lineno, "expected src<TAB>dst");
    const long long u = to_int(epath, lineno, f[0]);
    const long long v = to_int(epath, lineno, f[1]);
    if (u < 0 || u >= m.nodes || v < 0 || v >= m.nodes) {
      line_error(epath, lineno, "edge endpoint out of range");
    }
    if (u == v) continue;
    es.insert({int(u), int(v)});
    if (!m.directed) es.insert({int(v), int(u)});
  }
  g.edges.assign(es.begin(), es.end());

  g.validate();
  return g;
}

void save_dataset(const Graph& g, const DatasetManifest& m) {
  const std::string epath = join(m.base_dir, m.edges_file);
  const std::string fpath = join(m.base_dir, m.features_file);
  const std::string lpath = join(m.base_dir, m.labels_file);
  {
    std::ofstream out(epath, std::ios::binary);
    if (!out) throw DataError("save: cannot write " + epath);
    // Undirected graphs are stored as unordered pairs and symmetrized on
    // load; directed graphs keep every stored direction.
    if (m.directed) {
      for (auto [u, v] : g.edges) out << u << "\t" << v << "\n";
    } else {
      for (auto [u, v] : g.edges) {
        if (u < v) out << u << "\t" << v << "\n";
      }
    }
  }
  {
    std::ofstream out(fpath, std::ios::binary);
    if (!out) throw DataError("save: cannot write " + fpath);
    for (int i = 0; i < g.num_nodes; ++i) {
      out << i;
      for (int j = 0; j < g.feature_dim(); ++j) {
        out << "\t" << fmt_double(g.features.at(i, j));
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(lpath, std::ios::binary);
    if (!out) throw DataError("save: cannot write " + lpath);
    for (int i = 0; i < g.num_nodes; ++i) {
      out << i << "\t" << g.labels[size_t(i)] << "\n";
    }
  }
}

namespace {

SplitOutcome split_fixed_file(const Graph& g, const SplitSpec& spec) {
  SplitOutcome out{g, true};
  out.graph.split.assign(size_t(g.num_nodes), SplitTag::none);
  std::ifstream in(spec.file, std::ios::binary);
  if (!in) throw DataError("split: cannot open " + spec.file);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (f.size() != 2) line_error(spec.file, lineno, "expected node_id<TAB>tag");
    const long long id = to_int(spec.file, lineno, f[0]);
    if (id < 0 || id >= g.num_nodes) {
      line_error(spec.file, lineno, "node id out of range");
    }
    out.graph.split[size_t(id)] = split_tag_from(f[1]);
  }
  return out;
}

// Exact counts via largest remainder; ties resolved train, val, test.
std::array<int, 3> quota(int n, double tf, double vf, double ef) {
  const double want[3] = {tf * n, vf * n, ef * n};
  std::array<int, 3> got{int(want[0]), int(want[1]), int(want[2])};
  int left = n - got[0] - got[1] - got[2];
  double rem[3] = {want[0] - got[0], want[1] - got[1], want[2] - got[2]};
  while (left > 0) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best]) best = i;
    }
    got[size_t(best)] += 1;
    rem[best] = -1.0;
    --left;
  }
  return got;
}

void assign(std::vector<SplitTag>& tags, const std::vector<int>& order,
            const std::array<int, 3>& q) {
  size_t at = 0;
  for (int i = 0; i < q[0]; ++i) tags[size_t(order[at++])] = SplitTag::train;
  for (int i = 0; i < q[1]; ++i) tags[size_t(order[at++])] = SplitTag::val;
  for (int i = 0; i < q[2]; ++i) tags[size_t(order[at++])] = SplitTag::test;
}

}  // namespace

SplitOutcome make_split(const Graph& g, const SplitSpec& spec) {
  spec.validate();
  if (spec.mode == SplitSpec::Mode::fixed_file) return split_fixed_file(g, spec);

  std::vector<std::vector<int>> by_class{size_t(g.num_classes)};
  for (int i = 0; i < g.num_nodes; ++i) {
    by_class[size_t(g.labels[size_t(i)])].push_back(i);
  }
  int min_class = g.num_nodes;
  for (const auto& c : by_class) min_class = std::min(min_class, int(c.size()));

  SplitOutcome out{g, min_class >= 3};
  out.graph.split.assign(size_t(g.num_nodes), SplitTag::none);
  Rng rng(spec.seed);

  if (!out.stratified) {
    std::vector<int> order(size_t(g.num_nodes), 0);
    for (int i = 0; i < g.num_nodes; ++i) order[size_t(i)] = i;
    rng.shuffle(order);
    assign(out.graph.split, order,
           quota(g.num_nodes, spec.train_frac, spec.val_frac, spec.test_frac));
    return out;
  }

  for (auto& members : by_class) {
    rng.shuffle(members);
    assign(out.graph.split, members,
           quota(int(members.size()), spec.train_frac, spec.val_frac,
                 spec.test_frac));
  }
  return out;
}

Graph generate_planted_partition(int n, int classes, double h_target, int d0,
                                 double feature_noise, uint64_t seed) {
  if (h_target < 0.0 || h_target > 1.0) {
    throw DataError("generator: h_target outside [0,1]");
  }
  if (classes < 2) throw DataError("generator: need at least 2 classes");
  if (n < 4 * classes) throw DataError("generator: need n >= 4 * classes");
  if (d0 < classes) {
    throw DataError("generator: feature dim must be >= classes for orthogonal means");
  }
  constexpr double kMeanDegree = 10.0;
  const int m = n / classes;
  const double p_in = (m > 1) ? kMeanDegree * h_target / double(m - 1) : 0.0;
  const double p_out = kMeanDegree * (1.0 - h_target) / double(n - m);
  if (p_in > 1.0 || p_out > 1.0) {
    throw DataError("generator: mean degree 10 infeasible at this size");
  }

  Graph g;
  g.num_nodes = n;
  g.num_classes = classes;
  g.labels.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    g.labels[size_t(i)] = std::min(i / m, classes - 1);
  }

  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p =
          g.labels[size_t(i)] == g.labels[size_t(j)] ? p_in : p_out;
      if (rng.uniform() < p) {
        g.edges.push_back({i, j});
        g.edges.push_back({j, i});
      }
    }
  }

  std::sort(g.edges.begin(), g.edges.end());

  g.features = Tensor(n, d0);
  for (int i = 0; i < n; ++i) {
    g.features.at(i, g.labels[size_t(i)]) = 1.0;  // orthogonal unit mean
    for (int j = 0; j < d0; ++j) {
      g.features.at(i, j) += feature_noise * rng.normal();
    }
  }
  g.validate();
  return g;
}

void export_embeddings(const Graph& g, const Tensor& embeddings,
                       const std::string& path) {
  if (embeddings.rows != g.num_nodes) {
    throw DataError("export: embedding rows != num_nodes");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("export: cannot write " + path);
  out << "node_id\tlabel\tsplit";
  for (int j = 0; j < embeddings.cols; ++j) out << "\te" << j;
  out << "\n";
  for (int i = 0; i < g.num_nodes; ++i) {
    const SplitTag tag =
        g.split.empty() ? SplitTag::none : g.split[size_t(i)];
    out << i << "\t" << g.labels[size_t(i)] << "\t" << split_tag_name(tag);
    for (int j = 0; j < embeddings.cols; ++j) {
      out << "\t" << fmt_double(embeddings.at(i, j));
    }
    out << "\n";
  }
}

}  // namespace protomp
