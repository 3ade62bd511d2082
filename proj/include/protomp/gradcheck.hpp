#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace protomp {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  std::string worst_name;

  bool pass(double tol) const { return worst < tol; }
  void add(std::string name, double err);
};

// Finite-difference verification across the whole differentiable surface:
// 100 random composite tensor programs (depth <= 5, dims <= 8), the full
// augmented layer with both mechanisms on (K_N = K_A = 4, h = 8, V = 12),
// and the composite training loss for both backbones. Sample points near
// relu/abs/argmax kinks are re-drawn before differencing.
GradCheckReport run_gradcheck_suite(uint64_t seed);

}  // namespace protomp
