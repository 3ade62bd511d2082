#include "protomp/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "protomp/data_io.hpp"
#include "protomp/losses.hpp"
#include "protomp/metrics.hpp"

namespace protomp {

void OptimizerState::init(const std::vector<Param*>& params) {
  step_count = 0;
  m.clear();
  v.clear();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Param* p : params) {
    m.emplace_back(p->value.rows, p->value.cols);
    v.emplace_back(p->value.rows, p->value.cols);
  }
}

void adam_step(OptimizerState& s, const std::vector<Param*>& params) {
  if (s.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state not initialized for these params");
  }
  s.step_count += 1;
  const double bc1 = 1.0 - std::pow(s.beta1, s.step_count);
  const double bc2 = 1.0 - std::pow(s.beta2, s.step_count);
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Tensor& m = s.m[i];
    Tensor& v = s.v[i];
    if (p.decay && s.weight_decay > 0.0) {
      for (double& x : p.value.v) x -= s.lr * s.weight_decay * x;
    }
    for (size_t e = 0; e < p.value.v.size(); ++e) {
      const double g = p.grad.v[e];
      m.v[e] = s.beta1 * m.v[e] + (1.0 - s.beta1) * g;
      v.v[e] = s.beta2 * v.v[e] + (1.0 - s.beta2) * g * g;
      const double mhat = m.v[e] / bc1;
      const double vhat = v.v[e] / bc2;
      p.value.v[e] -= s.lr * mhat / (std::sqrt(vhat) + s.epsilon);
    }
  }
}

Var model_training_loss(Tape& t, const P2Model& model, const ForwardPass& fp,
                        const std::vector<int>& labels,
                        const std::vector<int>& train_mask) {
  const ExperimentConfig& cfg = model.config();
  Var task = cross_entropy(t, fp.logits, labels, train_mask);
  RegularizerInputs reg;
  reg.x = fp.x;
  if (model.bank().p_n) {
    // p_n leaf is the last parameter leaf by construction.
    reg.p_n = fp.param_leaves.back();
  }
  if (cfg.use_pa()) {
    // Recover each layer's p_a leaf from the parameter order.
    const auto& layers = model.layers();
    size_t li = 0;
    for (size_t l = 0; l < layers.size(); ++l) {
      li += 1;  // w_base
      if (layers[l].w_pn) li += 4;
      if (layers[l].gate_out) {
        li += 3;
        reg.p_a.push_back(fp.param_leaves[li]);
        li += 1;
        reg.h_n.push_back(fp.layers[l].h_n);
        reg.h_out.push_back(fp.layers[l].h_out);
      }
    }
  }
  return final_loss(t, task, reg, cfg.loss_weights());
}

RunResult fit(const Graph& g, const ExperimentConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<int> train_mask = g.split_indices(SplitTag::train);
  const std::vector<int> val_mask = g.split_indices(SplitTag::val);
  const std::vector<int> test_mask = g.split_indices(SplitTag::test);
  if (train_mask.empty() || val_mask.empty() || test_mask.empty()) {
    throw DataError("fit: empty train/val/test split");
  }

  Rng rng(cfg.seed);
  P2Model model(g, cfg, rng);
  OptimizerState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  opt.init(model.parameters());

  RunResult res;
  res.best_val_accuracy = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Tape t;
    ForwardPass fp = model.forward(t, true, rng);
    Var loss = model_training_loss(t, model, fp, g.labels, train_mask);
    const double loss_value = t.scalar(loss);
    if (!std::isfinite(loss_value)) {
      throw DivergenceError("fit: non-finite loss at epoch " +
                            std::to_string(epoch) + " (seed " +
                            std::to_string(cfg.seed) + ")");
    }
    res.train_losses.push_back(loss_value);
    t.backward(loss);
    const auto& params = model.parameters();
    for (size_t i = 0; i < params.size(); ++i) {
      params[i]->grad = t.grad(fp.param_leaves[i]);
    }
    adam_step(opt, params);

    // Evaluation pass, dropout off, no gradient recording.
    Tape te(false);
    ForwardPass fe = model.forward(te, false, rng);
    const std::vector<int> preds = argmax_rows(te.value(fe.logits));
    const double val_acc = accuracy(preds, g.labels, val_mask);
    res.epochs_run = epoch;
    if (val_acc > res.best_val_accuracy) {
      res.best_val_accuracy = val_acc;
      res.test_accuracy = accuracy(preds, g.labels, test_mask);
      res.best_epoch = epoch;
      res.predictions = preds;
      res.penultimate = te.value(fe.penultimate);
      res.attention_pn_mean.clear();
      res.attention_pa_mean.clear();
      for (const LayerTrace& tr : fe.layers) {
        if (tr.has_pn) {
          const Tensor& a = te.value(tr.alpha_pn);
          double s = 0.0;
          for (double x : a.v) s += x;
          res.attention_pn_mean.push_back(s / double(a.rows));
        }
        if (tr.has_pa) {
          const Tensor& a = te.value(tr.alpha_a);
          double s = 0.0;
          for (double x : a.v) s += x;
          res.attention_pa_mean.push_back(s / double(a.rows));
        }
      }
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }

  res.final_param_checksum =
      params_checksum(static_cast<const P2Model&>(model).parameters());
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / double(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / double(xs.size() - 1));
}

namespace {

// Regularized incomplete beta I_x(a, b) by continued fraction (Lentz).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double incbeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
      a * std::log(x) + b * std::log(1.0 - x);
  const double front = std::exp(ln);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// Two-sided p-value for Student's t with nu degrees of freedom.
double t_two_sided_p(double t, double nu) {
  const double x = nu / (nu + t * t);
  return incbeta(nu / 2.0, 0.5, x);
}

}  // namespace

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_t_test: length mismatch");
  }
  if (a.size() < 2) {
    throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  }
  const size_t n = a.size();
  std::vector<double> d(n, 0.0);
  for (size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double md = mean_of(d);
  double var = 0.0;
  for (double x : d) var += (x - md) * (x - md);
  var /= double(n - 1);
  TTestResult r;
  if (var == 0.0) {
    if (md == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = md > 0 ? 1e300 : -1e300;
      r.p = 0.0;
      r.degenerate = true;
    }
    return r;
  }
  r.t = md / std::sqrt(var / double(n));
  r.p = t_two_sided_p(r.t, double(n - 1));
  return r;
}

Graph split_for_seed(const Graph& g, const ExperimentConfig& cfg,
                     uint64_t run_seed) {
  SplitSpec spec = cfg.split;
  if (spec.mode == SplitSpec::Mode::random_fraction) {
    spec.seed = spec.seed + run_seed;
  }
  return make_split(g, spec).graph;
}

AblationResult run_ablation(const Graph& g, const ExperimentConfig& base,
                            const std::vector<int>& seeds) {
  if (seeds.empty()) {
    throw std::invalid_argument("run_ablation: need at least one seed");
  }
  if (base.k_n < 1 || base.k_a < 1) {
    throw ConfigError("run_ablation: base config must enable both prototype sets");
  }
  AblationResult out;
  out.seeds = seeds;
  out.single_seed_warning = seeds.size() < 2;

  struct VariantDef {
    const char* name;
    int k_n, k_a;
  };
  const VariantDef defs[3] = {
      {"backbone", 0, 0}, {"pn", base.k_n, 0}, {"pn_pa", base.k_n, base.k_a}};

  for (const VariantDef& vd : defs) {
    AblationRow row;
    row.variant = vd.name;
    for (int seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.k_n = vd.k_n;
      cfg.k_a = vd.k_a;
      cfg.seed = uint64_t(seed);
      Graph gs = split_for_seed(g, base, uint64_t(seed));
      row.test_accs.push_back(fit(gs, cfg).test_accuracy);
    }
    row.mean = mean_of(row.test_accs);
    row.stddev = sample_std(row.test_accs);
    out.rows.push_back(std::move(row));
  }
  if (seeds.size() >= 2) {
    for (int i = 1; i < 3; ++i) {
      out.rows[size_t(i)].vs_backbone =
          paired_t_test(out.rows[size_t(i)].test_accs, out.rows[0].test_accs);
    }
  }
  return out;
}

}  // namespace protomp
