#include "protomp/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace protomp {

Var apply_activation(Tape& t, Var x, Activation a) {
  return a == Activation::relu ? t.relu(x) : x;
}

Var gcn_forward(Tape& t, Var a_hat, Var h, Var w, Activation act) {
  return apply_activation(t, t.matmul(a_hat, t.matmul(h, w)), act);
}

Var sgc_forward(Tape& t, Var a_hat, Var x, Var w, int k) {
  if (k < 1) throw std::invalid_argument("sgc_forward: power must be >= 1");
  Var p = x;
  for (int i = 0; i < k; ++i) p = t.matmul(a_hat, p);
  return t.matmul(p, w);
}

MixedAttention mixed_attention(Tape& t, Var h_a, Var h_b, Var gate_a,
                               Var gate_b, Var w_mix, double temperature,
                               Activation act) {
  Var ta = t.sigmoid(t.matmul(h_a, gate_a));
  Var tb = t.sigmoid(t.matmul(h_b, gate_b));
  Var logits = t.matmul(t.scale(t.concat_cols(ta, tb), 1.0 / temperature),
                        w_mix);
  Var alphas = t.row_softmax(logits, 1.0);
  Var alpha_a = t.slice_cols(alphas, 0, 1);
  Var alpha_b = t.slice_cols(alphas, 1, 2);
  Var mixed = t.add(t.scale_rows(h_a, alpha_a), t.scale_rows(h_b, alpha_b));
  return MixedAttention{apply_activation(t, mixed, act), alpha_a, alpha_b};
}

Var align_messages(Tape& t, Var h_n, Var p_a) {
  Var weights = t.row_softmax(t.matmul(h_n, t.transpose(p_a)), 1.0);
  return t.matmul(weights, p_a);
}

namespace {

// Eq-2/3/4 composition on node rows, shared by the GCN and SGC paths.
LayerTrace apply_mechanisms(Tape& t, Var hb_nodes, Var hp_nodes,
                            const P2LayerVars& lv, P2LayerFlags flags,
                            Activation act, Var* node_out) {
  LayerTrace tr;
  tr.h_base = hb_nodes;
  Var h_n = hb_nodes;
  if (flags.use_pn) {
    tr.has_pn = true;
    tr.h_pn = hp_nodes;
    MixedAttention mx = mixed_attention(t, hb_nodes, hp_nodes, lv.gate_base,
                                        lv.gate_pn, lv.mix_n, lv.temperature,
                                        act);
    h_n = mx.h;
    tr.alpha_base = mx.alpha_a;
    tr.alpha_pn = mx.alpha_b;
  }
  tr.h_n = h_n;
  Var out = h_n;
  if (flags.use_pa) {
    tr.has_pa = true;
    Var h_a = align_messages(t, h_n, lv.p_a);
    tr.h_a = h_a;
    MixedAttention mx = mixed_attention(t, h_n, h_a, lv.gate_out, lv.gate_a,
                                        lv.mix_a, lv.temperature, act);
    out = mx.h;
    tr.alpha = mx.alpha_a;
    tr.alpha_a = mx.alpha_b;
  }
  tr.h_out = out;
  *node_out = out;
  return tr;
}

}  // namespace

P2LayerResult p2_layer_forward(Tape& t, const P2LayerVars& lv, Var a_base,
                               Var a_p, Var h_prev, int num_nodes,
                               P2LayerFlags flags, Activation act) {
  if (flags.use_pn && (!lv.w_pn.valid() || !lv.gate_base.valid() ||
                       !lv.gate_pn.valid() || !lv.mix_n.valid())) {
    throw std::invalid_argument(
        "p2_layer_forward: use_pn set but channel weights absent");
  }
  if (flags.use_pa && (!lv.p_a.valid() || !lv.gate_out.valid() ||
                       !lv.gate_a.valid() || !lv.mix_a.valid())) {
    throw std::invalid_argument(
        "p2_layer_forward: use_pa set but alignment weights absent");
  }
  P2LayerResult res;
  if (!flags.use_pn && !flags.use_pa) {
    // Plug-and-play identity: plain backbone layer, same ops in the same
    // order as gcn_forward.
    res.node_out = gcn_forward(t, a_base, h_prev, lv.w_base, act);
    res.trace.h_base = res.node_out;
    res.trace.h_n = res.node_out;
    res.trace.h_out = res.node_out;
    return res;
  }
  Var hb_nodes, hp_nodes;
  if (flags.use_pn) {
    Var hb_full = gcn_forward(t, a_base, h_prev, lv.w_base, act);
    Var hp_full = gcn_forward(t, a_p, h_prev, lv.w_pn, act);
    hb_nodes = t.slice_rows(hb_full, 0, num_nodes);
    hp_nodes = t.slice_rows(hp_full, 0, num_nodes);
    res.proto_next = t.slice_rows(hp_full, num_nodes, hp_full.rows);
  } else {
    hb_nodes = gcn_forward(t, a_base, h_prev, lv.w_base, act);
  }
  res.trace = apply_mechanisms(t, hb_nodes, hp_nodes, lv, flags, act,
                               &res.node_out);
  return res;
}

namespace {

Tensor xavier(int rows, int cols, Rng& rng) {
  const double b = std::sqrt(6.0 / double(rows + cols));
  Tensor t(rows, cols);
  for (double& x : t.v) x = rng.uniform(-b, b);
  return t;
}

Param make_param(std::string name, Tensor value, bool decay) {
  Param p;
  p.name = std::move(name);
  p.grad = Tensor(value.rows, value.cols);
  p.value = std::move(value);
  p.decay = decay;
  return p;
}

}  // namespace

P2Model::P2Model(const Graph& g, const ExperimentConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  g.validate();
  num_nodes_ = g.num_nodes;
  num_classes_ = g.num_classes;
  features_ = g.features;
  Tensor adj = g.dense_adjacency();
  if (cfg_.use_pn()) {
    ExpandedAdjacency ex = expand_for_prototypes(adj, cfg_.k_n);
    a_base_ = normalize_adjacency(ex.a_base, "a_base").a_hat;
    a_p_ = normalize_adjacency(ex.a_p, "a_p").a_hat;
  } else {
    a_plain_ = normalize_adjacency(adj, "a_hat").a_hat;
  }
  build_params(g, rng);
}

void P2Model::build_params(const Graph& g, Rng& rng) {
  const int d0 = g.feature_dim();
  const bool sgc = cfg_.backbone == Backbone::sgc;
  const int depth = sgc ? 1 : cfg_.num_layers;
  layers_.reserve(size_t(depth));
  if (cfg_.use_pa()) bank_.p_a.reserve(size_t(depth));

  for (int l = 0; l < depth; ++l) {
    const int d_in = (l == 0) ? d0 : cfg_.hidden;
    const int d_out =
        (sgc || l == depth - 1) ? num_classes_ : cfg_.hidden;
    LayerParams lp;
    lp.temperature = cfg_.temperature;
    const std::string tag = "l" + std::to_string(l + 1) + ".";
    lp.w_base = make_param(tag + "w_base", xavier(d_in, d_out, rng), true);
    if (cfg_.use_pn()) {
      lp.w_pn = make_param(tag + "w_pn", xavier(d_in, d_out, rng), true);
      lp.gate_base = make_param(tag + "gate_base", xavier(d_out, 1, rng), false);
      lp.gate_pn = make_param(tag + "gate_pn", xavier(d_out, 1, rng), false);
      lp.mix_n = make_param(tag + "mix_n", xavier(2, 2, rng), false);
    }
    if (cfg_.use_pa()) {
      lp.gate_out = make_param(tag + "gate_out", xavier(d_out, 1, rng), false);
      lp.gate_a = make_param(tag + "gate_a", xavier(d_out, 1, rng), false);
      lp.mix_a = make_param(tag + "mix_a", xavier(2, 2, rng), false);
      Tensor pa(cfg_.k_a, d_out);
      const double s = 1.0 / std::sqrt(double(d_out));
      for (double& x : pa.v) x = rng.normal() * s;
      bank_.p_a.push_back(
          make_param(tag + "p_a", std::move(pa), false));
    }
    layers_.push_back(std::move(lp));
  }

  if (cfg_.use_pn()) {
    // Prototype seeds: k_n input feature rows plus small noise.
    std::vector<int> rows;
    if (g.num_nodes >= cfg_.k_n) {
      std::vector<int> idx(size_t(g.num_nodes), 0);
      for (int i = 0; i < g.num_nodes; ++i) idx[size_t(i)] = i;
      rng.shuffle(idx);
      rows.assign(idx.begin(), idx.begin() + cfg_.k_n);
    } else {
      for (int k = 0; k < cfg_.k_n; ++k) {
        rows.push_back(int(rng.below(uint64_t(g.num_nodes))));
      }
    }
    Tensor pn(cfg_.k_n, g.feature_dim());
    for (int k = 0; k < cfg_.k_n; ++k) {
      for (int j = 0; j < g.feature_dim(); ++j) {
        pn.at(k, j) = g.features.at(rows[size_t(k)], j) + 1e-2 * rng.normal();
      }
    }
    bank_.p_n = make_param("p_n", std::move(pn), false);
  }

  for (size_t l = 0; l < layers_.size(); ++l) {
    LayerParams& lp = layers_[l];
    param_ptrs_.push_back(&lp.w_base);
    if (lp.w_pn) {
      param_ptrs_.push_back(&*lp.w_pn);
      param_ptrs_.push_back(&*lp.gate_base);
      param_ptrs_.push_back(&*lp.gate_pn);
      param_ptrs_.push_back(&*lp.mix_n);
    }
    if (lp.gate_out) {
      param_ptrs_.push_back(&*lp.gate_out);
      param_ptrs_.push_back(&*lp.gate_a);
      param_ptrs_.push_back(&*lp.mix_a);
      param_ptrs_.push_back(&bank_.p_a[l]);
    }
  }
  if (bank_.p_n) param_ptrs_.push_back(&*bank_.p_n);
}

std::vector<const Param*> P2Model::parameters() const {
  return std::vector<const Param*>(param_ptrs_.begin(), param_ptrs_.end());
}

ForwardPass P2Model::forward(Tape& t, bool training, Rng& rng) const {
  std::vector<Var> leaves;
  leaves.reserve(param_ptrs_.size());
  for (const Param* p : param_ptrs_) leaves.push_back(t.leaf(p->value, true));
  return forward_with_leaves(t, leaves, training, rng);
}

ForwardPass P2Model::forward_with_leaves(Tape& t,
                                         const std::vector<Var>& leaves,
                                         bool training, Rng& rng) const {
  if (leaves.size() != param_ptrs_.size()) {
    throw std::invalid_argument("forward: expected " +
                                std::to_string(param_ptrs_.size()) +
                                " leaves, got " +
                                std::to_string(leaves.size()));
  }
  ForwardPass out;
  out.param_leaves = leaves;
  forward_impl(t, leaves, training, rng, out);
  return out;
}

Var P2Model::forward_impl(Tape& t, const std::vector<Var>& leaves,
                          bool training, Rng& rng, ForwardPass& out) const {
  const bool use_pn = cfg_.use_pn();
  const bool use_pa = cfg_.use_pa();
  const bool sgc = cfg_.backbone == Backbone::sgc;
  const int v = num_nodes_;

  // Rebuild per-layer leaf handles in parameter order.
  size_t li = 0;
  std::vector<P2LayerVars> lvars{layers_.size()};
  for (size_t l = 0; l < layers_.size(); ++l) {
    P2LayerVars& lv = lvars[l];
    lv.temperature = cfg_.temperature;
    lv.w_base = leaves[li++];
    if (layers_[l].w_pn) {
      lv.w_pn = leaves[li++];
      lv.gate_base = leaves[li++];
      lv.gate_pn = leaves[li++];
      lv.mix_n = leaves[li++];
    }
    if (layers_[l].gate_out) {
      lv.gate_out = leaves[li++];
      lv.gate_a = leaves[li++];
      lv.mix_a = leaves[li++];
      lv.p_a = leaves[li++];
    }
  }
  Var pn_leaf;
  if (bank_.p_n) pn_leaf = leaves[li++];

  out.x = t.leaf(features_, false);
  Var a_base = use_pn ? t.leaf(a_base_, false) : t.leaf(a_plain_, false);
  Var a_p = use_pn ? t.leaf(a_p_, false) : Var{};
  Var h = use_pn ? t.vstack(out.x, pn_leaf) : out.x;

  const bool dropout_on = training && cfg_.dropout > 0.0;
  auto dropout_mask = [&](int rows, int cols) {
    Tensor m(rows, cols);
    const double keep = 1.0 - cfg_.dropout;
    for (double& x : m.v) x = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return t.leaf(std::move(m), false);
  };

  if (sgc) {
    // SGC composes as a single augmented layer whose propagation applies
    // the normalized adjacency num_layers times before one linear map.
    const P2LayerVars& lv = lvars[0];
    P2LayerFlags flags{use_pn, use_pa};
    Var hb_nodes, hp_nodes;
    Var pb = h;
    for (int k = 0; k < cfg_.num_layers; ++k) pb = t.matmul(a_base, pb);
    if (use_pn) {
      Var pp = h;
      for (int k = 0; k < cfg_.num_layers; ++k) pp = t.matmul(a_p, pp);
      hb_nodes = t.slice_rows(t.matmul(pb, lv.w_base), 0, v);
      hp_nodes = t.slice_rows(t.matmul(pp, lv.w_pn), 0, v);
    } else {
      hb_nodes = t.matmul(pb, lv.w_base);
    }
    Var node_out;
    LayerTrace tr = apply_mechanisms(t, hb_nodes, hp_nodes, lv, flags,
                                     Activation::identity, &node_out);
    out.layers.push_back(tr);
    out.penultimate = use_pn ? t.slice_rows(pb, 0, v) : pb;
    out.logits = node_out;
    return out.logits;
  }

  for (size_t l = 0; l < layers_.size(); ++l) {
    const bool last = (l + 1 == layers_.size());
    const Activation act = last ? Activation::identity : Activation::relu;
    P2LayerFlags flags{use_pn, use_pa};
    P2LayerResult res = p2_layer_forward(t, lvars[l], a_base, a_p, h, v,
                                         flags, act);
    out.layers.push_back(res.trace);
    if (last) {
      out.logits = res.node_out;
      break;
    }
    if (l + 2 == layers_.size()) out.penultimate = res.node_out;
    Var next_nodes = res.node_out;
    if (dropout_on) {
      next_nodes = t.mul(next_nodes, dropout_mask(v, next_nodes.cols));
    }
    h = use_pn ? t.vstack(next_nodes, res.proto_next) : next_nodes;
  }
  if (layers_.size() == 1) out.penultimate = out.x;
  return out.logits;
}

uint64_t params_checksum(const std::vector<const Param*>& params) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  };
  for (const Param* p : params) {
    for (double x : p->value.v) {
      uint64_t bits;
      static_assert(sizeof bits == sizeof x);
      __builtin_memcpy(&bits, &x, sizeof bits);
      mix(bits);
    }
  }
  return h;
}

}  // namespace protomp
