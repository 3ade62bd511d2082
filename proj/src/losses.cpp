#include "protomp/losses.hpp"

#include <stdexcept>

namespace protomp {

Var cross_entropy(Tape& t, Var logits, const std::vector<int>& labels,
                  const std::vector<int>& mask) {
  return t.cross_entropy(logits, labels, mask);
}

Var alignment_loss(Tape& t, Var h, Var p) {
  return t.scale(t.sum(t.row_cosine_max(h, p)), -1.0);
}

Var diversity_loss(Tape& t, Var p, Var h, DiversityAxis axis) {
  Var c = axis == DiversityAxis::samples
              ? t.row_softmax(t.matmul(p, t.transpose(h)), 1.0)
              : t.row_softmax(t.matmul(h, t.transpose(p)), 1.0);
  return t.sum(t.xlogx(c));
}

Var sparsity_loss(Tape& t, Var p) {
  return t.add(t.sum(t.square(p)), t.sum(t.abs(p)));
}

Var final_loss(Tape& t, Var task, const RegularizerInputs& reg,
               const LossWeights& w) {
  if (w.align < 0.0 || w.div < 0.0 || w.sparse < 0.0) {
    throw std::invalid_argument("final_loss: negative loss weight");
  }
  if (reg.p_a.size() != reg.h_n.size() || reg.p_a.size() != reg.h_out.size()) {
    throw std::invalid_argument("final_loss: per-layer inputs disagree");
  }
  Var total = task;
  if (!reg.p_a.empty()) {
    Var al = alignment_loss(t, reg.h_n[0], reg.p_a[0]);
    for (size_t l = 1; l < reg.p_a.size(); ++l) {
      al = t.add(al, alignment_loss(t, reg.h_n[l], reg.p_a[l]));
    }
    total = t.add(total, t.scale(al, w.align));
  }
  const bool has_pn = reg.p_n.valid();
  if (has_pn || !reg.p_a.empty()) {
    Var div{};
    bool have = false;
    if (has_pn) {
      div = diversity_loss(t, reg.p_n, reg.x, w.axis);
      have = true;
    }
    for (size_t l = 0; l < reg.p_a.size(); ++l) {
      Var d = diversity_loss(t, reg.p_a[l], reg.h_out[l], w.axis);
      div = have ? t.add(div, d) : d;
      have = true;
    }
    total = t.add(total, t.scale(div, w.div));

    Var sp{};
    have = false;
    if (has_pn) {
      sp = sparsity_loss(t, reg.p_n);
      have = true;
    }
    for (size_t l = 0; l < reg.p_a.size(); ++l) {
      Var s = sparsity_loss(t, reg.p_a[l]);
      sp = have ? t.add(sp, s) : s;
      have = true;
    }
    total = t.add(total, t.scale(sp, w.sparse));
  }
  return total;
}

}  // namespace protomp
