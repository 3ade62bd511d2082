#pragma once

#include <vector>

#include "protomp/tensor.hpp"

namespace protomp {

enum class DiversityAxis {
  samples,     // softmax across samples per prototype row (default)
  prototypes,  // softmax across prototypes per sample (ablation switch)
};

struct LossWeights {
  double align = 0.0;
  double div = 0.0;
  double sparse = 0.0;
  DiversityAxis axis = DiversityAxis::samples;
};

// Mean over masked rows of -log softmax(logits)[label]. Stabilized by
// row-max subtraction.
Var cross_entropy(Tape& t, Var logits, const std::vector<int>& labels,
                  const std::vector<int>& mask);

// -sum over rows of h of the max cosine similarity to any row of p.
// Range [-n, n] for n rows of h.
Var alignment_loss(Tape& t, Var h, Var p);

// sum C log C with C the prototype-sample attention softmax; negative
// entropy, so a positive weight in the total loss maximizes entropy.
// axis selects which way the softmax normalizes.
Var diversity_loss(Tape& t, Var p, Var h,
                   DiversityAxis axis = DiversityAxis::samples);

// sum of squared plus absolute entries (elastic net on the prototype matrix).
Var sparsity_loss(Tape& t, Var p);

// Per-layer pieces the regularizers need from a forward pass.
struct RegularizerInputs {
  std::vector<Var> p_a;       // one per layer with message alignment
  std::vector<Var> h_n;       // alignment target per such layer
  std::vector<Var> h_out;     // diversity target per such layer
  Var p_n;                    // invalid when prototypes-as-neighbors disabled
  Var x;                      // node features, diversity target for p_n
};

// task + align * sum_l alignment(H_N^l, P_A^l)
//      + div * (diversity(P_N, X) + sum_l diversity(P_A^l, H^l))
//      + sparse * (sparsity(P_N) + sum_l sparsity(P_A^l)).
// Disabled mechanisms contribute nothing.
Var final_loss(Tape& t, Var task, const RegularizerInputs& reg,
               const LossWeights& w);

}  // namespace protomp
