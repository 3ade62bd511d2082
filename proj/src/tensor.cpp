#include "protomp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace protomp {

Tensor Tensor::from(int r, int c, std::initializer_list<double> vals) {
  Tensor t(r, c);
  if (vals.size() != t.v.size()) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(vals.size()) +
                                " values for shape " + t.shape_str());
  }
  std::copy(vals.begin(), vals.end(), t.v.begin());
  return t;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

bool all_finite(const Tensor& t) {
  for (double x : t.v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace {

// C (+)= A * B
void mm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int l = 0; l < k; ++l) {
      const double s = arow[l];
      if (s == 0.0) continue;
      const double* brow = b.row(l);
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// C (+)= A * B^T
void mm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.rows;
  for (int i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (int j = 0; j < n; ++j) {
      const double* brow = b.row(j);
      double s = 0.0;
      for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
      crow[j] += s;
    }
  }
}

// C (+)= A^T * B
void mm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int l = 0; l < m; ++l) {
    const double* arow = a.row(l);
    const double* brow = b.row(l);
    for (int i = 0; i < k; ++i) {
      const double s = arow[i];
      if (s == 0.0) continue;
      double* crow = c.row(i);
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

}  // namespace

Var Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (recording_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  const Tensor& t = nodes_.back().value;
  return Var{int(nodes_.size()) - 1, t.rows, t.cols};
}

void Tape::check(Var v) const {
  if (v.id < 0 || size_t(v.id) >= nodes_.size()) {
    throw std::invalid_argument("Tape: handle does not belong to this tape");
  }
}

void Tape::acc(int id, const Tensor& g) {
  Tensor& slot = grads_[size_t(id)];
  if (slot.empty()) {
    slot = g;
    return;
  }
  for (size_t i = 0; i < slot.v.size(); ++i) slot.v[i] += g.v[i];
}

Tensor& Tape::grad_slot(int id) {
  Tensor& slot = grads_[size_t(id)];
  if (slot.empty()) {
    const Tensor& v = nodes_[size_t(id)].value;
    slot = Tensor(v.rows, v.cols);
  }
  return slot;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                val(a.id).shape_str() + " * " +
                                val(b.id).shape_str());
  }
  Tensor outv(a.rows, b.cols);
  mm_nn(val(a.id), val(b.id), outv);
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    nodes_[io].back = [this, ia, ib, io]() {
      const Tensor& g = grads_[io];
      if (nodes_[ia].needs_grad) mm_nt(g, val(ib), grad_slot(ia));
      if (nodes_[ib].needs_grad) mm_tn(val(ia), g, grad_slot(ib));
    };
  }
  return out;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}
}  // namespace

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "add");
  Tensor outv = val(a.id);
  const Tensor& bv = val(b.id);
  for (size_t i = 0; i < outv.v.size(); ++i) outv.v[i] += bv.v[i];
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    nodes_[io].back = [this, ia, ib, io]() {
      const Tensor& g = grads_[io];
      if (nodes_[ia].needs_grad) acc(ia, g);
      if (nodes_[ib].needs_grad) acc(ib, g);
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "sub");
  Tensor outv = val(a.id);
  const Tensor& bv = val(b.id);
  for (size_t i = 0; i < outv.v.size(); ++i) outv.v[i] -= bv.v[i];
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    nodes_[io].back = [this, ia, ib, io]() {
      const Tensor& g = grads_[io];
      if (nodes_[ia].needs_grad) acc(ia, g);
      if (nodes_[ib].needs_grad) {
        Tensor& db = grad_slot(ib);
        for (size_t i = 0; i < db.v.size(); ++i) db.v[i] -= g.v[i];
      }
    };
  }
  return out;
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  require_same_shape(val(a.id), val(b.id), "mul");
  Tensor outv = val(a.id);
  const Tensor& bv = val(b.id);
  for (size_t i = 0; i < outv.v.size(); ++i) outv.v[i] *= bv.v[i];
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    nodes_[io].back = [this, ia, ib, io]() {
      const Tensor& g = grads_[io];
      const Tensor& av = val(ia);
      const Tensor& bv2 = val(ib);
      if (nodes_[ia].needs_grad) {
        Tensor& da = grad_slot(ia);
        for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += g.v[i] * bv2.v[i];
      }
      if (nodes_[ib].needs_grad) {
        Tensor& db = grad_slot(ib);
        for (size_t i = 0; i < db.v.size(); ++i) db.v[i] += g.v[i] * av.v[i];
      }
    };
  }
  return out;
}

Var Tape::map_unary(Var a, const char* name, std::function<double(double)> f,
                    std::function<double(double, double)> dfdx) {
  check(a);
  (void)name;
  const Tensor& av = val(a.id);
  Tensor outv(av.rows, av.cols);
  for (size_t i = 0; i < av.v.size(); ++i) outv.v[i] = f(av.v[i]);
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io, dfdx = std::move(dfdx)]() {
      const Tensor& g = grads_[io];
      const Tensor& x = val(ia);
      const Tensor& y = val(io);
      Tensor& da = grad_slot(ia);
      for (size_t i = 0; i < da.v.size(); ++i) {
        da.v[i] += g.v[i] * dfdx(x.v[i], y.v[i]);
      }
    };
  }
  return out;
}

Var Tape::relu(Var a) {
  check(a);
  // Inputs pinned at exactly 0 (a zero composition) do not move under leaf
  // perturbation; only near-zero nonzero inputs threaten finite differences.
  for (double x : val(a.id).v) {
    if (x != 0.0) kink_margin_ = std::min(kink_margin_, std::fabs(x));
  }
  return map_unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::sigmoid(Var a) {
  return map_unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tape::log(Var a) {
  check(a);
  for (double x : val(a.id).v) {
    if (!(x > 0.0)) {
      throw std::domain_error("log: input must be strictly positive, got " +
                              std::to_string(x));
    }
  }
  return map_unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var Tape::square(Var a) {
  return map_unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var Tape::abs(Var a) {
  check(a);
  for (double x : val(a.id).v) {
    if (x != 0.0) kink_margin_ = std::min(kink_margin_, std::fabs(x));
  }
  return map_unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Tape::xlogx(Var a) {
  return map_unary(
      a, "xlogx", [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; },
      [](double x, double) { return x > 0.0 ? std::log(x) + 1.0 : 0.0; });
}

Var Tape::scale(Var a, double c) {
  check(a);
  Tensor outv = val(a.id);
  for (double& x : outv.v) x *= c;
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io, c]() {
      const Tensor& g = grads_[io];
      Tensor& da = grad_slot(ia);
      for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += c * g.v[i];
    };
  }
  return out;
}

Var Tape::transpose(Var a) {
  check(a);
  const Tensor& av = val(a.id);
  Tensor outv(av.cols, av.rows);
  for (int i = 0; i < av.rows; ++i) {
    for (int j = 0; j < av.cols; ++j) outv.at(j, i) = av.at(i, j);
  }
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io]() {
      const Tensor& g = grads_[io];
      Tensor& da = grad_slot(ia);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) da.at(j, i) += g.at(i, j);
      }
    };
  }
  return out;
}

Var Tape::concat_cols(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (av.rows != bv.rows) {
    throw std::invalid_argument("concat_cols: row counts differ, " +
                                av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor outv(av.rows, av.cols + bv.cols);
  for (int i = 0; i < av.rows; ++i) {
    std::copy(av.row(i), av.row(i) + av.cols, outv.row(i));
    std::copy(bv.row(i), bv.row(i) + bv.cols, outv.row(i) + av.cols);
  }
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    const int ac = av.cols, bc = bv.cols;
    nodes_[io].back = [this, ia, ib, io, ac, bc]() {
      const Tensor& g = grads_[io];
      if (nodes_[ia].needs_grad) {
        Tensor& da = grad_slot(ia);
        for (int i = 0; i < da.rows; ++i) {
          for (int j = 0; j < ac; ++j) da.at(i, j) += g.at(i, j);
        }
      }
      if (nodes_[ib].needs_grad) {
        Tensor& db = grad_slot(ib);
        for (int i = 0; i < db.rows; ++i) {
          for (int j = 0; j < bc; ++j) db.at(i, j) += g.at(i, ac + j);
        }
      }
    };
  }
  return out;
}

Var Tape::vstack(Var a, Var b) {
  check(a);
  check(b);
  const Tensor& av = val(a.id);
  const Tensor& bv = val(b.id);
  if (av.cols != bv.cols) {
    throw std::invalid_argument("vstack: column counts differ, " +
                                av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor outv(av.rows + bv.rows, av.cols);
  std::copy(av.v.begin(), av.v.end(), outv.v.begin());
  std::copy(bv.v.begin(), bv.v.end(), outv.v.begin() + av.v.size());
  const bool req = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, ib = b.id, io = out.id;
    const int ar = av.rows;
    nodes_[io].back = [this, ia, ib, io, ar]() {
      const Tensor& g = grads_[io];
      if (nodes_[ia].needs_grad) {
        Tensor& da = grad_slot(ia);
        for (size_t i = 0; i < da.v.size(); ++i) da.v[i] += g.v[i];
      }
      if (nodes_[ib].needs_grad) {
        Tensor& db = grad_slot(ib);
        const size_t off = size_t(ar) * g.cols;
        for (size_t i = 0; i < db.v.size(); ++i) db.v[i] += g.v[off + i];
      }
    };
  }
  return out;
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  check(a);
  const Tensor& av = val(a.id);
  if (r0 < 0 || r1 > av.rows || r0 >= r1) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(r0) +
                                ", " + std::to_string(r1) + ") of " +
                                av.shape_str());
  }
  Tensor outv(r1 - r0, av.cols);
  std::copy(av.row(r0), av.row(r0) + outv.v.size(), outv.v.begin());
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io, r0]() {
      const Tensor& g = grads_[io];
      Tensor& da = grad_slot(ia);
      const size_t off = size_t(r0) * g.cols;
      for (size_t i = 0; i < g.v.size(); ++i) da.v[off + i] += g.v[i];
    };
  }
  return out;
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  check(a);
  const Tensor& av = val(a.id);
  if (c0 < 0 || c1 > av.cols || c0 >= c1) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) +
                                ", " + std::to_string(c1) + ") of " +
                                av.shape_str());
  }
  Tensor outv(av.rows, c1 - c0);
  for (int i = 0; i < av.rows; ++i) {
    std::copy(av.row(i) + c0, av.row(i) + c1, outv.row(i));
  }
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io, c0]() {
      const Tensor& g = grads_[io];
      Tensor& da = grad_slot(ia);
      for (int i = 0; i < g.rows; ++i) {
        for (int j = 0; j < g.cols; ++j) da.at(i, c0 + j) += g.at(i, j);
      }
    };
  }
  return out;
}

Var Tape::scale_rows(Var m, Var col) {
  check(m);
  check(col);
  const Tensor& mv = val(m.id);
  const Tensor& cv = val(col.id);
  if (cv.cols != 1 || cv.rows != mv.rows) {
    throw std::invalid_argument("scale_rows: scale must be " +
                                std::to_string(mv.rows) + "x1, got " +
                                cv.shape_str());
  }
  Tensor outv(mv.rows, mv.cols);
  for (int i = 0; i < mv.rows; ++i) {
    const double s = cv.at(i, 0);
    const double* src = mv.row(i);
    double* dst = outv.row(i);
    for (int j = 0; j < mv.cols; ++j) dst[j] = s * src[j];
  }
  const bool req = nodes_[m.id].needs_grad || nodes_[col.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int im = m.id, ic = col.id, io = out.id;
    nodes_[io].back = [this, im, ic, io]() {
      const Tensor& g = grads_[io];
      const Tensor& mv2 = val(im);
      const Tensor& cv2 = val(ic);
      if (nodes_[im].needs_grad) {
        Tensor& dm = grad_slot(im);
        for (int i = 0; i < g.rows; ++i) {
          const double s = cv2.at(i, 0);
          for (int j = 0; j < g.cols; ++j) dm.at(i, j) += s * g.at(i, j);
        }
      }
      if (nodes_[ic].needs_grad) {
        Tensor& dc = grad_slot(ic);
        for (int i = 0; i < g.rows; ++i) {
          double s = 0.0;
          for (int j = 0; j < g.cols; ++j) s += g.at(i, j) * mv2.at(i, j);
          dc.at(i, 0) += s;
        }
      }
    };
  }
  return out;
}

Var Tape::row_softmax(Var a, double temperature) {
  check(a);
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("row_softmax: temperature must be positive");
  }
  const Tensor& av = val(a.id);
  Tensor outv(av.rows, av.cols);
  for (int i = 0; i < av.rows; ++i) {
    const double* src = av.row(i);
    double* dst = outv.row(i);
    double mx = src[0] / temperature;
    for (int j = 1; j < av.cols; ++j) mx = std::max(mx, src[j] / temperature);
    double z = 0.0;
    for (int j = 0; j < av.cols; ++j) {
      dst[j] = std::exp(src[j] / temperature - mx);
      z += dst[j];
    }
    for (int j = 0; j < av.cols; ++j) dst[j] /= z;
  }
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io, temperature]() {
      const Tensor& g = grads_[io];
      const Tensor& y = val(io);
      Tensor& da = grad_slot(ia);
      for (int i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j) dot += g.at(i, j) * y.at(i, j);
        for (int j = 0; j < y.cols; ++j) {
          da.at(i, j) += y.at(i, j) * (g.at(i, j) - dot) / temperature;
        }
      }
    };
  }
  return out;
}

Var Tape::row_cosine_max(Var h, Var p) {
  check(h);
  check(p);
  const Tensor& hv = val(h.id);
  const Tensor& pv = val(p.id);
  if (hv.cols != pv.cols) {
    throw std::invalid_argument("row_cosine_max: dims disagree, " +
                                hv.shape_str() + " vs " + pv.shape_str());
  }
  constexpr double kEps = 1e-12;
  std::vector<double> pnorm(size_t(pv.rows), 0.0);
  for (int k = 0; k < pv.rows; ++k) {
    double s = 0.0;
    const double* pr = pv.row(k);
    for (int j = 0; j < pv.cols; ++j) s += pr[j] * pr[j];
    pnorm[k] = std::sqrt(s);
  }
  Tensor outv(hv.rows, 1);
  std::vector<int> arg(hv.rows, 0);
  for (int i = 0; i < hv.rows; ++i) {
    const double* hr = hv.row(i);
    double hs = 0.0;
    for (int j = 0; j < hv.cols; ++j) hs += hr[j] * hr[j];
    const double hn = std::sqrt(hs);
    double best = -2.0, second = -2.0;
    int bk = 0;
    for (int k = 0; k < pv.rows; ++k) {
      const double* pr = pv.row(k);
      double dot = 0.0;
      for (int j = 0; j < hv.cols; ++j) dot += hr[j] * pr[j];
      const double c = dot / ((hn + kEps) * (pnorm[k] + kEps));
      if (c > best) {
        second = best;
        best = c;
        bk = k;
      } else if (c > second) {
        second = c;
      }
    }
    if (pv.rows > 1) kink_margin_ = std::min(kink_margin_, best - second);
    outv.at(i, 0) = best;
    arg[i] = bk;
  }
  const bool req = nodes_[h.id].needs_grad || nodes_[p.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ih = h.id, ip = p.id, io = out.id;
    nodes_[io].back = [this, ih, ip, io, arg = std::move(arg),
                       pnorm = std::move(pnorm)]() {
      const Tensor& g = grads_[io];
      const Tensor& hv2 = val(ih);
      const Tensor& pv2 = val(ip);
      const int d = hv2.cols;
      for (int i = 0; i < hv2.rows; ++i) {
        const double go = g.at(i, 0);
        if (go == 0.0) continue;
        const int k = arg[i];
        const double* hr = hv2.row(i);
        const double* pr = pv2.row(k);
        double hs = 0.0, dot = 0.0;
        for (int j = 0; j < d; ++j) {
          hs += hr[j] * hr[j];
          dot += hr[j] * pr[j];
        }
        const double hn = std::sqrt(hs);
        const double nh = hn + kEps, np = pnorm[k] + kEps;
        const double denom = nh * np;
        // d cos / dh = p/(nh*np) - dot * (h/|h|) / (nh^2 * np); the norm
        // derivative term vanishes at h = 0 (dot is 0 there too).
        const double hscale = hn > 0.0 ? dot / (nh * nh * np * hn) : 0.0;
        const double pn = pnorm[k];
        const double pscale = pn > 0.0 ? dot / (np * np * nh * pn) : 0.0;
        if (nodes_[ih].needs_grad) {
          Tensor& dh = grad_slot(ih);
          double* dhr = dh.row(i);
          for (int j = 0; j < d; ++j) {
            dhr[j] += go * (pr[j] / denom - hscale * hr[j]);
          }
        }
        if (nodes_[ip].needs_grad) {
          Tensor& dp = grad_slot(ip);
          double* dpr = dp.row(k);
          for (int j = 0; j < d; ++j) {
            dpr[j] += go * (hr[j] / denom - pscale * pr[j]);
          }
        }
      }
    };
  }
  return out;
}

Var Tape::sum(Var a) {
  check(a);
  const Tensor& av = val(a.id);
  double s = 0.0;
  for (double x : av.v) s += x;
  Tensor outv(1, 1);
  outv.at(0, 0) = s;
  const bool req = nodes_[a.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int ia = a.id, io = out.id;
    nodes_[io].back = [this, ia, io]() {
      const double g = grads_[io].at(0, 0);
      Tensor& da = grad_slot(ia);
      for (double& x : da.v) x += g;
    };
  }
  return out;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels,
                        const std::vector<int>& mask) {
  check(logits);
  const Tensor& lv = val(logits.id);
  if (mask.empty()) {
    throw std::invalid_argument("cross_entropy: empty mask");
  }
  if (int(labels.size()) != lv.rows) {
    throw std::invalid_argument("cross_entropy: " +
                                std::to_string(labels.size()) +
                                " labels for logits " + lv.shape_str());
  }
  const int C = lv.cols;
  double total = 0.0;
  for (int i : mask) {
    if (i < 0 || i >= lv.rows) {
      throw std::invalid_argument("cross_entropy: mask index out of range");
    }
    const int y = labels[size_t(i)];
    if (y < 0 || y >= C) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
    const double* r = lv.row(i);
    double mx = r[0];
    for (int j = 1; j < C; ++j) mx = std::max(mx, r[j]);
    double z = 0.0;
    for (int j = 0; j < C; ++j) z += std::exp(r[j] - mx);
    total += std::log(z) - (r[y] - mx);
  }
  const double m = double(mask.size());
  Tensor outv(1, 1);
  outv.at(0, 0) = total / m;
  const bool req = nodes_[logits.id].needs_grad;
  Var out = push(std::move(outv), req, nullptr);
  if (recording_ && req) {
    const int il = logits.id, io = out.id;
    nodes_[io].back = [this, il, io, labels, mask, m]() {
      const double g = grads_[io].at(0, 0);
      const Tensor& x = val(il);
      Tensor& dx = grad_slot(il);
      const int C2 = x.cols;
      for (int i : mask) {
        const double* r = x.row(i);
        double* dr = dx.row(i);
        double mx = r[0];
        for (int j = 1; j < C2; ++j) mx = std::max(mx, r[j]);
        double z = 0.0;
        for (int j = 0; j < C2; ++j) z += std::exp(r[j] - mx);
        for (int j = 0; j < C2; ++j) {
          double p = std::exp(r[j] - mx) / z;
          dr[j] += g * (p - (j == labels[size_t(i)] ? 1.0 : 0.0)) / m;
        }
      }
    };
  }
  return out;
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[size_t(v.id)].value;
}

double Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.rows != 1 || t.cols != 1) {
    throw std::invalid_argument("scalar: tensor is " + t.shape_str());
  }
  return t.at(0, 0);
}

void Tape::backward(Var loss) {
  check(loss);
  if (!recording_) {
    throw std::logic_error("backward: tape was created non-recording");
  }
  const Tensor& lv = val(loss.id);
  if (lv.rows != 1 || lv.cols != 1) {
    throw std::invalid_argument("backward: loss must be 1x1, got " +
                                lv.shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[size_t(loss.id)] = Tensor(1, 1, 1.0);
  ran_backward_ = true;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (!n.needs_grad || !n.back || grads_[size_t(i)].empty()) continue;
    n.back();
  }
}

Tensor Tape::grad(Var v) const {
  check(v);
  if (!ran_backward_) {
    throw std::logic_error("grad: backward has not been run");
  }
  const Tensor& slot = grads_[size_t(v.id)];
  if (slot.empty()) {
    const Tensor& t = nodes_[size_t(v.id)].value;
    return Tensor(t.rows, t.cols);
  }
  return slot;
}

double grad_check(const TensorProgram& program,
                  const std::vector<Tensor>& leaves, double epsilon) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(leaves.size());
  for (const Tensor& t : leaves) vars.push_back(tape.leaf(t, true));
  Var loss = program(tape, vars);
  if (loss.rows != 1 || loss.cols != 1) {
    throw std::invalid_argument("grad_check: program must return a scalar");
  }
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(vars.size());
  for (Var v : vars) analytic.push_back(tape.grad(v));

  auto eval = [&](const std::vector<Tensor>& pts) {
    Tape t(false);
    std::vector<Var> vs;
    vs.reserve(pts.size());
    for (const Tensor& x : pts) vs.push_back(t.leaf(x, false));
    return t.scalar(program(t, vs));
  };

  double worst = 0.0;
  std::vector<Tensor> work = leaves;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (size_t e = 0; e < leaves[li].v.size(); ++e) {
      const double orig = work[li].v[e];
      work[li].v[e] = orig + epsilon;
      const double fp = eval(work);
      work[li].v[e] = orig - epsilon;
      const double fm = eval(work);
      work[li].v[e] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[li].v[e];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace protomp
