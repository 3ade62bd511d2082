#include "protomp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace protomp {

const char* split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    case SplitTag::none: return "none";
  }
  return "none";
}

SplitTag split_tag_from(const std::string& s) {
  if (s == "train") return SplitTag::train;
  if (s == "val") return SplitTag::val;
  if (s == "test") return SplitTag::test;
  if (s == "none") return SplitTag::none;
  throw std::invalid_argument("unknown split tag: " + s);
}

int Graph::undirected_edge_count() const {
  std::set<std::pair<int, int>> pairs;
  for (auto [u, v] : edges) {
    pairs.insert({std::min(u, v), std::max(u, v)});
  }
  return int(pairs.size());
}

std::vector<std::vector<int>> Graph::out_neighbors() const {
  std::vector<std::vector<int>> nbr{size_t(num_nodes)};
  for (auto [u, v] : edges) nbr[size_t(u)].push_back(v);
  return nbr;
}

Tensor Graph::dense_adjacency() const {
  Tensor a(num_nodes, num_nodes);
  for (auto [u, v] : edges) {
    if (u == v) continue;
    a.at(u, v) = 1.0;
    a.at(v, u) = 1.0;
  }
  return a;
}

std::vector<int> Graph::split_indices(SplitTag tag) const {
  std::vector<int> idx;
  for (int i = 0; i < int(split.size()); ++i) {
    if (split[size_t(i)] == tag) idx.push_back(i);
  }
  return idx;
}

void Graph::validate() const {
  for (auto [u, v] : edges) {
    if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes) {
      throw std::invalid_argument("graph: edge endpoint out of range");
    }
    if (u == v) throw std::invalid_argument("graph: self-loop stored");
  }
  if (features.rows != num_nodes) {
    throw std::invalid_argument("graph: feature rows != num_nodes");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw std::invalid_argument("graph: label out of range");
    }
  }
  if (!split.empty() && int(split.size()) != num_nodes) {
    throw std::invalid_argument("graph: split size != num_nodes");
  }
}

NormalizedAdjacency normalize_adjacency(const Tensor& a,
                                        const std::string& note) {
  if (a.rows != a.cols) {
    throw std::invalid_argument("normalize_adjacency: matrix is " +
                                a.shape_str() + ", expected square");
  }
  const int n = a.rows;
  std::vector<double> dinv(size_t(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double d = 1.0;  // self-loop
    for (int j = 0; j < n; ++j) d += a.at(i, j);
    dinv[size_t(i)] = 1.0 / std::sqrt(d);
  }
  Tensor out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double aij = a.at(i, j) + (i == j ? 1.0 : 0.0);
      if (aij != 0.0) out.at(i, j) = dinv[size_t(i)] * aij * dinv[size_t(j)];
    }
  }
  return NormalizedAdjacency{std::move(out), note};
}

ExpandedAdjacency expand_for_prototypes(const Tensor& a, int k_n) {
  if (a.rows != a.cols) {
    throw std::invalid_argument("expand_for_prototypes: matrix is " +
                                a.shape_str() + ", expected square");
  }
  if (k_n < 1) {
    throw std::invalid_argument(
        "expand_for_prototypes: k_n must be >= 1 (skip expansion instead)");
  }
  const int v = a.rows;
  const int n = v + k_n;
  ExpandedAdjacency out{Tensor(n, n), Tensor(n, n)};
  for (int i = 0; i < v; ++i) {
    for (int j = 0; j < v; ++j) out.a_base.at(i, j) = a.at(i, j);
    for (int k = 0; k < k_n; ++k) out.a_p.at(i, v + k) = 1.0;
  }
  return out;
}

HomophilyStats node_homophily(const Graph& g) {
  if (g.labels.empty()) {
    throw std::invalid_argument("node_homophily: graph has no labels");
  }
  auto nbr = g.out_neighbors();
  HomophilyStats st;
  st.ratio.assign(size_t(g.num_nodes), -1.0);
  double sum = 0.0;
  int counted = 0;
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& ns = nbr[size_t(i)];
    if (ns.empty()) {
      ++st.isolated;
      continue;
    }
    int same = 0;
    for (int j : ns) same += (g.labels[size_t(j)] == g.labels[size_t(i)]);
    st.ratio[size_t(i)] = double(same) / double(ns.size());
    sum += st.ratio[size_t(i)];
    ++counted;
  }
  if (counted == 0) {
    throw std::domain_error("node_homophily: all nodes isolated, mean undefined");
  }
  st.mean = sum / double(counted);
  return st;
}

double edge_homophily(const Graph& g) {
  if (g.edges.empty()) {
    throw std::domain_error("edge_homophily: graph has no edges");
  }
  int same = 0;
  for (auto [u, v] : g.edges) {
    same += (g.labels[size_t(u)] == g.labels[size_t(v)]);
  }
  return double(same) / double(g.edges.size());
}

const char* segment_name(HomophilySegment s) {
  switch (s) {
    case HomophilySegment::shet: return "shet";
    case HomophilySegment::whet: return "whet";
    case HomophilySegment::whom: return "whom";
    case HomophilySegment::shom: return "shom";
  }
  return "shet";
}

HomophilySegment segment_by_homophily(double ratio) {
  if (ratio < 0.0 || ratio > 1.0) {
    throw std::invalid_argument("segment_by_homophily: ratio " +
                                std::to_string(ratio) + " outside [0,1]");
  }
  if (ratio <= 0.25) return HomophilySegment::shet;
  if (ratio <= 0.5) return HomophilySegment::whet;
  if (ratio <= 0.75) return HomophilySegment::whom;
  return HomophilySegment::shom;
}

}  // namespace protomp
