#pragma once

#include <string>
#include <utility>
#include <vector>

#include "protomp/tensor.hpp"

namespace protomp {

enum class SplitTag { train, val, test, none };

const char* split_tag_name(SplitTag t);
SplitTag split_tag_from(const std::string& s);

// Node-labelled graph. Edges are stored directed; undirected sources store
// both directions. No self-loops are stored (normalization adds them).
// Immutable after construction, safe to share read-only across threads.
struct Graph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;  // (src, dst), deduplicated
  Tensor features;                         // V x d0
  std::vector<int> labels;                 // in [0, num_classes)
  int num_classes = 0;
  std::vector<SplitTag> split;             // empty or size V

  int feature_dim() const { return features.cols; }
  // Unordered node pairs with at least one stored direction.
  int undirected_edge_count() const;
  std::vector<std::vector<int>> out_neighbors() const;
  // Dense symmetric {0,1} adjacency without self-loops.
  Tensor dense_adjacency() const;
  std::vector<int> split_indices(SplitTag tag) const;
  void validate() const;
};

struct NormalizedAdjacency {
  Tensor a_hat;
  std::string note;
};

// D~^{-1/2} (A + I) D~^{-1/2} with D~_ii = 1 + sum_j A_ij.
// A must be square with entries in {0, 1}.
NormalizedAdjacency normalize_adjacency(const Tensor& a,
                                        const std::string& note = "");

// Block expansion for prototype message passing: a_base embeds A top-left,
// a_p carries the all-ones V x k_n top-right block (prototypes send to all
// nodes, receive from none, no prototype-prototype edges).
struct ExpandedAdjacency {
  Tensor a_base;
  Tensor a_p;
};
ExpandedAdjacency expand_for_prototypes(const Tensor& a, int k_n);

// Per-node fraction of neighbors sharing the node's label, over stored
// out-edges. Isolated nodes carry ratio -1 and are excluded from the mean.
struct HomophilyStats {
  std::vector<double> ratio;
  int isolated = 0;
  double mean = 0.0;
};
HomophilyStats node_homophily(const Graph& g);

// Fraction of stored edges whose endpoints share a label.
double edge_homophily(const Graph& g);

enum class HomophilySegment { shet, whet, whom, shom };
const char* segment_name(HomophilySegment s);

// SHet: r <= 0.25, WHet: 0.25 < r <= 0.5, WHom: 0.5 < r <= 0.75,
// SHom: 0.75 < r <= 1.
HomophilySegment segment_by_homophily(double ratio);

}  // namespace protomp
