#pragma once

#include <optional>
#include <vector>

#include "protomp/graph.hpp"

namespace protomp {

// Row-wise argmax; ties broken toward the lower column index.
std::vector<int> argmax_rows(const Tensor& t);

// Fraction of masked nodes whose prediction matches the label.
double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& labels, const std::vector<int>& mask);

struct SegmentBucket {
  int count = 0;
  int correct = 0;
  double acc() const { return count > 0 ? double(correct) / count : 0.0; }
};

// Accuracy split by the node-homophily segments of the masked nodes.
// Buckets with zero nodes are reported absent. Nodes without neighbors have
// no homophily ratio and land in the isolated bucket, so the count-weighted
// bucket accuracies always reproduce the overall accuracy exactly.
struct SegmentReport {
  std::optional<SegmentBucket> segments[4];  // shet, whet, whom, shom
  std::optional<SegmentBucket> isolated;
  int total = 0;
  int total_correct = 0;
  double overall() const {
    return total > 0 ? double(total_correct) / total : 0.0;
  }
};

SegmentReport segment_accuracy(const std::vector<int>& predictions,
                               const Graph& g, const std::vector<int>& mask);

// Fraction of queries whose ground-truth item appears in the top k of its
// ranked list.
double hits_at_k(const std::vector<std::vector<int>>& ranked_lists,
                 const std::vector<int>& ground_truth, int k);

// Mean over queries of 1/rank when rank <= k, else 0.
double mrr_at_k(const std::vector<std::vector<int>>& ranked_lists,
                const std::vector<int>& ground_truth, int k);

// Items sorted by descending score; score ties broken by ascending index.
std::vector<int> rank_items(const std::vector<double>& scores);

}  // namespace protomp
