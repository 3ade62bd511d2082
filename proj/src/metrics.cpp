#include "protomp/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace protomp {

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(size_t(t.rows), 0);
  for (int i = 0; i < t.rows; ++i) {
    const double* r = t.row(i);
    int best = 0;
    for (int j = 1; j < t.cols; ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[size_t(i)] = best;
  }
  return out;
}

double accuracy(const std::vector<int>& predictions,
                const std::vector<int>& labels, const std::vector<int>& mask) {
  if (mask.empty()) throw std::invalid_argument("accuracy: empty mask");
  int correct = 0;
  for (int i : mask) {
    correct += (predictions[size_t(i)] == labels[size_t(i)]);
  }
  return double(correct) / double(mask.size());
}

SegmentReport segment_accuracy(const std::vector<int>& predictions,
                               const Graph& g, const std::vector<int>& mask) {
  HomophilyStats hs = node_homophily(g);
  SegmentReport rep;
  auto bump = [](std::optional<SegmentBucket>& b, bool ok) {
    if (!b) b.emplace();
    b->count += 1;
    b->correct += ok ? 1 : 0;
  };
  for (int i : mask) {
    const bool ok = predictions[size_t(i)] == g.labels[size_t(i)];
    rep.total += 1;
    rep.total_correct += ok ? 1 : 0;
    const double r = hs.ratio[size_t(i)];
    if (r < 0.0) {
      bump(rep.isolated, ok);
    } else {
      bump(rep.segments[size_t(segment_by_homophily(r))], ok);
    }
  }
  return rep;
}

double hits_at_k(const std::vector<std::vector<int>>& ranked_lists,
                 const std::vector<int>& ground_truth, int k) {
  if (ranked_lists.empty()) throw std::invalid_argument("hits_at_k: no queries");
  if (ranked_lists.size() != ground_truth.size()) {
    throw std::invalid_argument("hits_at_k: query/truth size mismatch");
  }
  if (k < 1) throw std::invalid_argument("hits_at_k: k must be >= 1");
  int hits = 0;
  for (size_t q = 0; q < ranked_lists.size(); ++q) {
    const auto& list = ranked_lists[q];
    const int top = std::min<int>(k, int(list.size()));
    for (int i = 0; i < top; ++i) {
      if (list[size_t(i)] == ground_truth[q]) {
        ++hits;
        break;
      }
    }
  }
  return double(hits) / double(ranked_lists.size());
}

double mrr_at_k(const std::vector<std::vector<int>>& ranked_lists,
                const std::vector<int>& ground_truth, int k) {
  if (ranked_lists.empty()) throw std::invalid_argument("mrr_at_k: no queries");
  if (ranked_lists.size() != ground_truth.size()) {
    throw std::invalid_argument("mrr_at_k: query/truth size mismatch");
  }
  if (k < 1) throw std::invalid_argument("mrr_at_k: k must be >= 1");
  double total = 0.0;
  for (size_t q = 0; q < ranked_lists.size(); ++q) {
    const auto& list = ranked_lists[q];
    const int top = std::min<int>(k, int(list.size()));
    for (int i = 0; i < top; ++i) {
      if (list[size_t(i)] == ground_truth[q]) {
        total += 1.0 / double(i + 1);
        break;
      }
    }
  }
  return total / double(ranked_lists.size());
}

std::vector<int> rank_items(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[size_t(a)] != scores[size_t(b)]) {
      return scores[size_t(a)] > scores[size_t(b)];
    }
    return a < b;
  });
  return idx;
}

}  // namespace protomp
