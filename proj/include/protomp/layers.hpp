#pragma once

#include <optional>
#include <string>
#include <vector>

#include "protomp/config.hpp"
#include "protomp/graph.hpp"
#include "protomp/rng.hpp"
#include "protomp/tensor.hpp"

namespace protomp {

enum class Activation { relu, identity };
Var apply_activation(Tape& t, Var x, Activation a);

// A trainable tensor with its last computed gradient. decay marks it for
// decoupled weight decay (transform matrices only; prototypes and gates
// are exempt).
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = false;
};

// All trainable weights of one prototype-augmented layer. Optional members
// are absent when the corresponding mechanism is disabled, not zero-sized.
struct LayerParams {
  Param w_base;                    // d_in x h
  std::optional<Param> w_pn;       // d_in x h, neighbor-prototype channel
  std::optional<Param> gate_base;  // h x 1
  std::optional<Param> gate_pn;    // h x 1
  std::optional<Param> mix_n;      // 2 x 2
  std::optional<Param> gate_out;   // h x 1, message-alignment site
  std::optional<Param> gate_a;     // h x 1
  std::optional<Param> mix_a;      // 2 x 2
  double temperature = 2.0;
};

// Learnable prototype matrices: p_n in input space, p_a per layer in that
// layer's hidden space.
struct PrototypeBank {
  std::optional<Param> p_n;    // k_n x d0
  std::vector<Param> p_a;      // k_a x h_l, one per layer
};

// sigma(A_hat * H * W)
Var gcn_forward(Tape& t, Var a_hat, Var h, Var w, Activation act);

// A_hat applied k times to X, then one linear map. No nonlinearity.
Var sgc_forward(Tape& t, Var a_hat, Var x, Var w, int k);

struct MixedAttention {
  Var h;        // activation(alpha_a . H_a + alpha_b . H_b), row-wise
  Var alpha_a;  // n x 1
  Var alpha_b;  // n x 1
};

// Two-channel mixing: per-node sigmoid gates, concatenated, divided by the
// temperature, linearly mixed and row-softmaxed into convex weights.
MixedAttention mixed_attention(Tape& t, Var h_a, Var h_b, Var gate_a,
                               Var gate_b, Var w_mix, double temperature,
                               Activation act);

// Per node: softmax over prototypes of <H_N[i], P_A[k]>, then the weighted
// sum of prototype rows. Every output row is a convex combination of rows
// of p_a.
Var align_messages(Tape& t, Var h_n, Var p_a);

struct LayerTrace {
  Var h_base, h_pn, h_n, h_a, h_out;        // node rows
  Var alpha_base, alpha_pn, alpha, alpha_a; // n x 1 each
  bool has_pn = false;
  bool has_pa = false;
};

struct P2LayerFlags {
  bool use_pn = false;
  bool use_pa = false;
};

// Tape handles for one layer's weights. Members for disabled mechanisms are
// left invalid.
struct P2LayerVars {
  Var w_base;
  Var w_pn, gate_base, gate_pn, mix_n;
  Var gate_out, gate_a, mix_a, p_a;
  double temperature = 2.0;
};

struct P2LayerResult {
  Var node_out;    // the layer's output on node rows
  Var proto_next;  // prototype rows for the next layer; invalid w/o use_pn
  LayerTrace trace;
};

// One augmented layer. With both flags off this is exactly gcn_forward.
// With use_pn, h_prev must carry num_nodes node rows followed by k_n
// prototype rows; proto_next carries the prototype rows transformed through
// the prototype channel only (they receive no messages by construction of
// the expanded adjacency).
P2LayerResult p2_layer_forward(Tape& t, const P2LayerVars& lv, Var a_base,
                               Var a_p, Var h_prev, int num_nodes,
                               P2LayerFlags flags, Activation act);

// Everything a training step needs from one forward pass.
struct ForwardPass {
  Var logits;                     // V x C
  Var x;                          // feature leaf (constant)
  std::vector<Var> param_leaves;  // aligned with P2Model::parameters()
  std::vector<LayerTrace> layers;
  Var penultimate;                // input to the final transform, node rows
};

// The full model: chosen backbone with the two plug-in prototype mechanisms.
class P2Model {
 public:
  P2Model(const Graph& g, const ExperimentConfig& cfg, Rng& rng);

  // Builds one define-by-run pass over the given tape. Dropout masks are
  // drawn from rng only when training and cfg.dropout > 0.
  ForwardPass forward(Tape& t, bool training, Rng& rng) const;
  // Same pass but over caller-provided parameter leaves (finite-difference
  // checks perturb these).
  ForwardPass forward_with_leaves(Tape& t, const std::vector<Var>& leaves,
                                  bool training, Rng& rng) const;

  // Deterministic order; stable for the lifetime of the model.
  const std::vector<Param*>& parameters() { return param_ptrs_; }
  std::vector<const Param*> parameters() const;

  const ExperimentConfig& config() const { return cfg_; }
  int num_nodes() const { return num_nodes_; }
  int num_classes() const { return num_classes_; }
  const PrototypeBank& bank() const { return bank_; }
  const std::vector<LayerParams>& layers() const { return layers_; }

 private:
  void build_params(const Graph& g, Rng& rng);
  Var forward_impl(Tape& t, const std::vector<Var>& leaves, bool training,
                   Rng& rng, ForwardPass& out) const;

  ExperimentConfig cfg_;
  int num_nodes_ = 0;
  int num_classes_ = 0;
  Tensor features_;            // preprocessed node features
  Tensor a_plain_;             // normalized adjacency (no expansion)
  Tensor a_base_, a_p_;        // normalized expanded pair (with k_n > 0)
  PrototypeBank bank_;
  std::vector<LayerParams> layers_;
  std::vector<Param*> param_ptrs_;
};

// FNV-1a over the raw bits of all parameter values, in parameter order.
uint64_t params_checksum(const std::vector<const Param*>& params);

}  // namespace protomp
