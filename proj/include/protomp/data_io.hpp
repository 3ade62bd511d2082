#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protomp/config.hpp"
#include "protomp/graph.hpp"

namespace protomp {

// Describes one on-disk dataset. File paths are relative to the manifest's
// directory. Declared counts must match the file contents on load.
struct DatasetManifest {
  std::string name;
  int nodes = 0;
  int feature_dim = 0;
  int classes = 0;
  std::string edges_file;
  std::string features_file;
  std::string labels_file;
  bool directed = false;
  bool l1_normalize = true;
  std::string base_dir;  // set on load
};

DatasetManifest load_manifest(const std::string& path);

// Reads the edge/feature/label files. Features are L1 row-normalized unless
// the manifest turns it off; labels are remapped to [0, C); duplicate edges
// are dropped, as are self-loops; undirected datasets store both directions.
Graph load_dataset(const DatasetManifest& m);

// Companion writer in the same format. Used by the generator and the
// round-trip tests.
void save_dataset(const Graph& g, const DatasetManifest& m);

// Stratified-by-class random assignment at the spec's fractions. Falls back
// to an unstratified split (with warning set) when any class has fewer than
// 3 nodes. fixed_file mode reads node -> tag lines from spec.file.
struct SplitOutcome {
  Graph graph;
  bool stratified = true;
};
SplitOutcome make_split(const Graph& g, const SplitSpec& spec);

// Random graph with expected within-class edge fraction h_target at a mean
// degree of 10. Features are orthogonal unit-norm class means plus Gaussian
// noise scaled by feature_noise.
Graph generate_planted_partition(int n, int classes, double h_target, int d0,
                                 double feature_noise, uint64_t seed);

// Tab-separated: header, then node_id, label, split and the embedding row,
// 17 significant digits.
void export_embeddings(const Graph& g, const Tensor& embeddings,
                       const std::string& path);

}  // namespace protomp
