#include "protomp/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "protomp/data_io.hpp"
#include "protomp/graph.hpp"
#include "protomp/layers.hpp"
#include "protomp/losses.hpp"
#include "protomp/rng.hpp"
#include "protomp/tensor.hpp"
#include "protomp/training.hpp"

namespace protomp {

void GradCheckReport::add(std::string name, double err) {
  if (entries.empty() || err > worst) {
    worst = err;
    worst_name = name;
  }
  entries.push_back(GradCheckEntry{std::move(name), err});
}

namespace {

constexpr double kKinkMargin = 1e-3;
constexpr double kEpsilon = 1e-5;

// A replayable random composite program over the tape op set.
struct ProgramSpec {
  enum Kind {
    kAdd, kSub, kMul, kRelu, kSigmoid, kLogSigmoid, kSquare, kAbs,
    kSoftmax, kCosMax, kMatmul
  };
  struct Step {
    Kind kind;
    int a = -1;
    int b = -1;
    double c = 1.0;
  };
  std::vector<std::pair<int, int>> leaf_shapes;
  std::vector<Step> steps;
  std::string desc;

  Var replay(Tape& t, const std::vector<Var>& leaves) const {
    std::vector<Var> pool = leaves;
    for (const Step& s : steps) {
      Var a = pool[size_t(s.a)];
      switch (s.kind) {
        case kAdd: pool.push_back(t.add(a, pool[size_t(s.b)])); break;
        case kSub: pool.push_back(t.sub(a, pool[size_t(s.b)])); break;
        case kMul: pool.push_back(t.mul(a, pool[size_t(s.b)])); break;
        case kRelu: pool.push_back(t.relu(a)); break;
        case kSigmoid: pool.push_back(t.sigmoid(a)); break;
        case kLogSigmoid: pool.push_back(t.log(t.sigmoid(a))); break;
        case kSquare: pool.push_back(t.square(a)); break;
        case kAbs: pool.push_back(t.abs(a)); break;
        case kSoftmax: pool.push_back(t.row_softmax(a, s.c)); break;
        case kCosMax: pool.push_back(t.row_cosine_max(a, pool[size_t(s.b)])); break;
        case kMatmul: pool.push_back(t.matmul(a, pool[size_t(s.b)])); break;
      }
    }
    return t.sum(pool.back());
  }
};

const char* kind_name(ProgramSpec::Kind k) {
  switch (k) {
    case ProgramSpec::kAdd: return "add";
    case ProgramSpec::kSub: return "sub";
    case ProgramSpec::kMul: return "mul";
    case ProgramSpec::kRelu: return "relu";
    case ProgramSpec::kSigmoid: return "sigmoid";
    case ProgramSpec::kLogSigmoid: return "log(sigmoid)";
    case ProgramSpec::kSquare: return "square";
    case ProgramSpec::kAbs: return "abs";
    case ProgramSpec::kSoftmax: return "row_softmax";
    case ProgramSpec::kCosMax: return "row_cosine_max";
    case ProgramSpec::kMatmul: return "matmul";
  }
  return "?";
}

// Pool indices are shared between generation and replay: leaves first, then
// one output per step. Operands are only ever drawn from the existing pool.
ProgramSpec random_program(Rng& rng, int index) {
  ProgramSpec p;
  std::vector<std::pair<int, int>> shapes;  // pool shapes
  const int nleaves = 3 + int(rng.below(2));
  for (int i = 0; i < nleaves; ++i) {
    shapes.push_back({1 + int(rng.below(4)), 1 + int(rng.below(4))});
  }
  p.leaf_shapes = shapes;

  auto find_shape = [&](auto&& pred) {
    const size_t n = shapes.size();
    const size_t start = rng.below(n);
    for (size_t k = 0; k < n; ++k) {
      const size_t i = (start + k) % n;
      if (pred(shapes[i])) return int(i);
    }
    return -1;
  };

  const int depth = 2 + int(rng.below(4));
  p.desc = "program#" + std::to_string(index) + "[";
  for (int d = 0; d < depth; ++d) {
    ProgramSpec::Step s;
    bool placed = false;
    for (int attempt = 0; attempt < 8 && !placed; ++attempt) {
      s.kind = ProgramSpec::Kind(rng.below(11));
      s.a = int(rng.below(shapes.size()));
      const auto [r, c] = shapes[size_t(s.a)];
      switch (s.kind) {
        case ProgramSpec::kAdd:
        case ProgramSpec::kSub:
        case ProgramSpec::kMul:
          s.b = find_shape([&](auto sh) { return sh.first == r && sh.second == c; });
          if (s.b < 0) break;
          shapes.push_back({r, c});
          placed = true;
          break;
        case ProgramSpec::kMatmul:
          s.b = find_shape([&](auto sh) { return sh.first == c; });
          if (s.b < 0) break;
          shapes.push_back({r, shapes[size_t(s.b)].second});
          placed = true;
          break;
        case ProgramSpec::kCosMax:
          s.b = find_shape([&](auto sh) { return sh.second == c; });
          if (s.b < 0) break;
          shapes.push_back({r, 1});
          placed = true;
          break;
        case ProgramSpec::kSoftmax:
          s.c = rng.below(2) == 0 ? 1.0 : 2.0;
          shapes.push_back({r, c});
          placed = true;
          break;
        default:
          shapes.push_back({r, c});
          placed = true;
          break;
      }
    }
    if (!placed) {
      s.kind = ProgramSpec::kSigmoid;
      s.a = int(rng.below(shapes.size()));
      shapes.push_back(shapes[size_t(s.a)]);
    }
    p.steps.push_back(s);
    p.desc += std::string(d ? "," : "") + kind_name(s.kind);
  }
  p.desc += "]";
  return p;
}

std::vector<Tensor> sample_leaves(
    const std::vector<std::pair<int, int>>& shapes, Rng& rng, double lo,
    double hi) {
  std::vector<Tensor> out;
  out.reserve(shapes.size());
  for (auto [r, c] : shapes) {
    Tensor t(r, c);
    for (double& x : t.v) x = rng.uniform(lo, hi);
    out.push_back(std::move(t));
  }
  return out;
}

double probe_margin(const TensorProgram& f, const std::vector<Tensor>& leaves) {
  Tape t(false);
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (const Tensor& x : leaves) vars.push_back(t.leaf(x, false));
  f(t, vars);
  return t.kink_margin();
}

void check_random_programs(GradCheckReport& rep, Rng& rng) {
  double worst = -1.0;
  std::string worst_desc = "random_programs";
  for (int i = 0; i < 100; ++i) {
    ProgramSpec spec = random_program(rng, i);
    TensorProgram f = [&spec](Tape& t, const std::vector<Var>& vs) {
      return spec.replay(t, vs);
    };
    std::vector<Tensor> leaves;
    bool ok = false;
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
      leaves = sample_leaves(spec.leaf_shapes, rng, -2.0, 2.0);
      ok = probe_margin(f, leaves) >= kKinkMargin;
    }
    if (!ok) {
      // Pathological draw; skip rather than difference across a kink.
      continue;
    }
    const double err = grad_check(f, leaves, kEpsilon);
    if (err > worst) {
      worst = err;
      worst_desc = spec.desc;
    }
  }
  rep.add("random_programs " + worst_desc, std::max(worst, 0.0));
}

void check_p2_layer(GradCheckReport& rep, Rng& rng) {
  const int v = 12, k_n = 4, k_a = 4, d_in = 6, h = 8;
  Tensor adj(v, v);
  for (int i = 0; i < v; ++i) {
    for (int j = i + 1; j < v; ++j) {
      if (rng.uniform() < 0.3) {
        adj.at(i, j) = 1.0;
        adj.at(j, i) = 1.0;
      }
    }
  }
  ExpandedAdjacency ex = expand_for_prototypes(adj, k_n);
  const Tensor a_base = normalize_adjacency(ex.a_base).a_hat;
  const Tensor a_p = normalize_adjacency(ex.a_p).a_hat;
  Tensor x(v, d_in);
  for (double& e : x.v) e = rng.uniform(-1.0, 1.0);

  // Leaves: w_base, w_pn, gate_base, gate_pn, mix_n, gate_out, gate_a,
  // mix_a, p_a, p_n.
  std::vector<std::pair<int, int>> shapes = {
      {d_in, h}, {d_in, h}, {h, 1}, {h, 1}, {2, 2},
      {h, 1},    {h, 1},    {2, 2}, {k_a, h}, {k_n, d_in}};
  TensorProgram f = [&, v](Tape& t, const std::vector<Var>& vs) {
    P2LayerVars lv;
    lv.w_base = vs[0];
    lv.w_pn = vs[1];
    lv.gate_base = vs[2];
    lv.gate_pn = vs[3];
    lv.mix_n = vs[4];
    lv.gate_out = vs[5];
    lv.gate_a = vs[6];
    lv.mix_a = vs[7];
    lv.p_a = vs[8];
    lv.temperature = 2.0;
    Var xv = t.leaf(x, false);
    Var ab = t.leaf(a_base, false);
    Var ap = t.leaf(a_p, false);
    Var h0 = t.vstack(xv, vs[9]);
    P2LayerResult res = p2_layer_forward(t, lv, ab, ap, h0, v,
                                         P2LayerFlags{true, true},
                                         Activation::relu);
    return t.add(t.sum(res.node_out), t.sum(res.proto_next));
  };

  std::vector<Tensor> leaves;
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    leaves = sample_leaves(shapes, rng, -0.7, 0.7);
    ok = probe_margin(f, leaves) >= kKinkMargin;
  }
  if (!ok) throw std::runtime_error("gradcheck: p2_layer sample never cleared kinks");
  rep.add("p2_layer", grad_check(f, leaves, kEpsilon));
}

void check_final_loss(GradCheckReport& rep, Backbone backbone, Rng& rng) {
  ExperimentConfig cfg;
  cfg.backbone = backbone;
  cfg.num_layers = 2;
  cfg.hidden = 4;
  cfg.k_n = 2;
  cfg.k_a = 2;
  cfg.lambda_align = 0.1;
  cfg.lambda_div = 0.1;
  cfg.lambda_sparse = 0.1;
  cfg.dropout = 0.0;
  cfg.seed = 7;

  Graph g = generate_planted_partition(16, 2, 0.5, 4, 0.5, rng.next_u64());
  std::vector<int> train_mask;
  for (int i = 0; i < 10; ++i) train_mask.push_back(i);

  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng init(rng.next_u64());
    P2Model model(g, cfg, init);
    const auto params = static_cast<const P2Model&>(model).parameters();
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const Param* p : params) leaves.push_back(p->value);

    TensorProgram f = [&model, &g, &train_mask](Tape& t,
                                                const std::vector<Var>& vs) {
      Rng unused(0);
      ForwardPass fp = model.forward_with_leaves(t, vs, true, unused);
      return model_training_loss(t, model, fp, g.labels, train_mask);
    };
    if (probe_margin(f, leaves) < kKinkMargin) continue;
    rep.add(std::string("final_loss_") + backbone_name(backbone),
            grad_check(f, leaves, kEpsilon));
    return;
  }
  throw std::runtime_error("gradcheck: final_loss sample never cleared kinks");
}

}  // namespace

GradCheckReport run_gradcheck_suite(uint64_t seed) {
  Rng rng(seed);
  GradCheckReport rep;
  check_random_programs(rep, rng);
  check_p2_layer(rep, rng);
  check_final_loss(rep, Backbone::gcn, rng);
  check_final_loss(rep, Backbone::sgc, rng);
  return rep;
}

}  // namespace protomp
