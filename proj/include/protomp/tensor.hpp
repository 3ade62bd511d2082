#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace protomp {

// Dense rank-2 array of 64-bit floats, row-major.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(size_t(r) * size_t(c), fill) {}

  static Tensor from(int r, int c, std::initializer_list<double> vals);

  double& at(int i, int j) { return v[size_t(i) * cols + j]; }
  double at(int i, int j) const { return v[size_t(i) * cols + j]; }
  const double* row(int i) const { return v.data() + size_t(i) * cols; }
  double* row(int i) { return v.data() + size_t(i) * cols; }
  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
  std::string shape_str() const;
};

bool all_finite(const Tensor& t);

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
  int rows = 0;
  int cols = 0;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape, define-by-run. Rebuilt every forward pass and confined
// to one thread of control. Operand handles always precede their outputs,
// so recording order is a topological order.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Var leaf(Tensor value, bool requires_grad = false);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  Var square(Var a);
  Var abs(Var a);
  // x * ln(x), with 0 mapped to 0 (removable singularity; subgradient 0).
  Var xlogx(Var a);
  // Generic elementwise op. dfdx receives (x, f(x)).
  Var map_unary(Var a, const char* name, std::function<double(double)> f,
                std::function<double(double, double)> dfdx);
  Var scale(Var a, double c);
  Var transpose(Var a);
  Var concat_cols(Var a, Var b);
  Var vstack(Var a, Var b);
  Var slice_rows(Var a, int r0, int r1);
  Var slice_cols(Var a, int c0, int c1);
  // Row i of m scaled by col[i]; col is n-by-1.
  Var scale_rows(Var m, Var col);
  // Row-wise softmax of a / temperature, stabilized by row-max subtraction.
  Var row_softmax(Var a, double temperature);
  // Per row of h: max over rows of p of cosine similarity. Gradients flow
  // through the argmax prototype only. Norms are guarded by epsilon 1e-12.
  Var row_cosine_max(Var h, Var p);
  Var sum(Var a);
  // Mean over masked rows of -log softmax(logits)[label], stabilized.
  Var cross_entropy(Var logits, const std::vector<int>& labels,
                    const std::vector<int>& mask);

  const Tensor& value(Var v) const;
  double scalar(Var v) const;

  // Backpropagate from a 1x1 loss node. Gradients of requires_grad leaves
  // that the loss does not depend on are zero.
  void backward(Var loss);
  Tensor grad(Var v) const;

  // Smallest distance to a relu/abs kink or cosine-argmax tie seen while
  // recording. Lets callers re-sample before finite differencing.
  double kink_margin() const { return kink_margin_; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool needs_grad = false;
    std::function<void()> back;
  };

  Var push(Tensor value, bool needs_grad, std::function<void()> back);
  const Tensor& val(int id) const { return nodes_[size_t(id)].value; }
  void acc(int id, const Tensor& g);
  Tensor& grad_slot(int id);
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool recording_ = true;
  bool ran_backward_ = false;
  double kink_margin_ = 1e300;
};

// A tensor program mapping leaves to a scalar output on the given tape.
using TensorProgram =
    std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares the analytic gradient of `program` at `leaves` against central
// finite differences with step `epsilon`. Returns the worst relative error
// with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const TensorProgram& program,
                  const std::vector<Tensor>& leaves, double epsilon);

}  // namespace protomp
