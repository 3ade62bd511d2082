#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "protomp/rng.hpp"
#include "protomp/tensor.hpp"

using namespace protomp;

namespace {

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(r, c);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul hand values") {
  Tape t;
  Var i2 = t.leaf(Tensor::from(2, 2, {1, 0, 0, 1}));
  Var m = t.leaf(Tensor::from(2, 2, {3, -1, 7, 2}));
  Var prod = t.matmul(i2, m);
  CHECK(t.value(prod).v == t.value(m).v);

  Var a = t.leaf(Tensor::from(2, 2, {1, 2, 3, 4}));
  Var b = t.leaf(Tensor::from(2, 1, {5, 6}));
  Var ab = t.matmul(a, b);
  CHECK(t.value(ab).at(0, 0) == 17.0);
  CHECK(t.value(ab).at(1, 0) == 39.0);

  Var z = t.leaf(Tensor(2, 2));
  Var zm = t.matmul(z, m);
  for (double x : t.value(zm).v) CHECK(x == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  Tape t;
  Var a = t.leaf(Tensor(2, 3));
  Var b = t.leaf(Tensor(2, 3));
  CHECK_THROWS_WITH_AS(t.matmul(a, b),
                       doctest::Contains("2x3"), std::invalid_argument);
}

TEST_CASE("elementwise hand values") {
  Tape t;
  Var zero = t.leaf(Tensor(1, 1));
  CHECK(t.value(t.sigmoid(zero)).at(0, 0) == 0.5);

  Var x = t.leaf(Tensor::from(1, 2, {-1, 2}));
  const Tensor& r = t.value(t.relu(x));
  CHECK(r.at(0, 0) == 0.0);
  CHECK(r.at(0, 1) == 2.0);

  // square + abs is the sparsity-loss summand
  Var y = t.leaf(Tensor::from(1, 2, {1, -2}));
  const Tensor& s = t.value(t.add(t.square(y), t.abs(y)));
  CHECK(s.at(0, 0) == 2.0);
  CHECK(s.at(0, 1) == 6.0);

  Var neg = t.leaf(Tensor::from(1, 1, {-0.5}));
  CHECK_THROWS_AS(t.log(neg), std::domain_error);

  Var a = t.leaf(Tensor(2, 2));
  Var b = t.leaf(Tensor(2, 3));
  CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
}

TEST_CASE("row_softmax") {
  Tape t;
  Var a = t.leaf(Tensor::from(1, 2, {0, 0}));
  const Tensor& r = t.value(t.row_softmax(a, 2.0));
  CHECK(r.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  Var b = t.leaf(Tensor::from(1, 2, {std::log(3.0), 0}));
  const Tensor& rb = t.value(t.row_softmax(b, 1.0));
  CHECK(rb.at(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(rb.at(0, 1) == doctest::Approx(0.25).epsilon(1e-12));

  Var c = t.leaf(Tensor::from(1, 2, {1000, 0}));
  const Tensor& rc = t.value(t.row_softmax(c, 1.0));
  CHECK(rc.at(0, 0) == 1.0);
  CHECK(rc.at(0, 1) == 0.0);

  CHECK_THROWS_AS(t.row_softmax(a, 0.0), std::invalid_argument);
}

TEST_CASE("row_softmax rows sum to 1 for random inputs") {
  Rng rng(17);
  for (double temp : {1.0, 2.0, 10.0}) {
    for (int rep = 0; rep < 20; ++rep) {
      Tape t;
      Var a = t.leaf(random_tensor(5, 7, rng, -50.0, 50.0));
      const Tensor& r = t.value(t.row_softmax(a, temp));
      for (int i = 0; i < r.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < r.cols; ++j) s += r.at(i, j);
        CHECK(std::fabs(s - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("row_cosine_max hand values") {
  Tape t;
  Var h = t.leaf(Tensor::from(1, 2, {0.3, -0.4}));
  CHECK(t.value(t.row_cosine_max(h, h)).at(0, 0) ==
        doctest::Approx(1.0).epsilon(1e-9));

  Var h2 = t.leaf(Tensor::from(1, 2, {1, 0}));
  Var p2 = t.leaf(Tensor::from(2, 2, {0, 1, -1, 0}));
  CHECK(t.value(t.row_cosine_max(h2, p2)).at(0, 0) ==
        doctest::Approx(0.0).epsilon(1e-12));

  Var h3 = t.leaf(Tensor::from(1, 2, {1, 1}));
  Var p3 = t.leaf(Tensor::from(2, 2, {1, 0, 0, 1}));
  CHECK(t.value(t.row_cosine_max(h3, p3)).at(0, 0) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("backward basics") {
  Tape t;
  Var w = t.leaf(Tensor::from(2, 2, {1, -2, 3, 0.5}), true);
  Var loss = t.sum(w);
  t.backward(loss);
  for (double g : t.grad(w).v) CHECK(g == 1.0);

  Tape t2;
  Var w2 = t2.leaf(Tensor::from(2, 2, {1, -2, 3, 0.5}), true);
  Var loss2 = t2.sum(t2.square(w2));
  t2.backward(loss2);
  const Tensor g2 = t2.grad(w2);
  for (size_t i = 0; i < g2.v.size(); ++i) {
    CHECK(g2.v[i] == doctest::Approx(2.0 * t2.value(w2).v[i]).epsilon(1e-15));
  }
}

TEST_CASE("backward rejects non-scalar loss and unused leaves get zeros") {
  Tape t;
  Var w = t.leaf(Tensor(2, 2), true);
  Var unused = t.leaf(Tensor(3, 1), true);
  CHECK_THROWS_AS(t.backward(w), std::invalid_argument);
  Var loss = t.sum(w);
  t.backward(loss);
  for (double g : t.grad(unused).v) CHECK(g == 0.0);
}

TEST_CASE("grad_check core programs") {
  Rng rng(5);
  SUBCASE("sum sigmoid") {
    std::vector<Tensor> leaves = {random_tensor(3, 4, rng)};
    double err = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          return t.sum(t.sigmoid(v[0]));
        },
        leaves, 1e-5);
    CHECK(err < 1e-6);
  }
  SUBCASE("matmul chain of depth 3") {
    std::vector<Tensor> leaves = {random_tensor(3, 4, rng),
                                  random_tensor(4, 5, rng),
                                  random_tensor(5, 2, rng),
                                  random_tensor(2, 3, rng)};
    double err = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          return t.sum(t.matmul(t.matmul(t.matmul(v[0], v[1]), v[2]), v[3]));
        },
        leaves, 1e-5);
    CHECK(err < 1e-5);
  }
  SUBCASE("constant program") {
    std::vector<Tensor> leaves = {random_tensor(2, 2, rng)};
    double err = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          (void)v;
          return t.sum(t.leaf(Tensor(1, 1, 3.0)));
        },
        leaves, 1e-5);
    CHECK(err == 0.0);
  }
  SUBCASE("composite with softmax, cosine, slicing") {
    std::vector<Tensor> leaves = {random_tensor(4, 3, rng),
                                  random_tensor(2, 3, rng)};
    double err = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          Var sm = t.row_softmax(v[0], 2.0);
          Var cm = t.row_cosine_max(sm, v[1]);
          Var left = t.slice_cols(
              t.slice_rows(t.transpose(t.scale(v[0], 0.7)), 0, 2), 0, 3);
          return t.add(t.sum(cm), t.sum(t.mul(left, v[1])));
        },
        leaves, 1e-5);
    CHECK(err < 1e-5);
  }
  SUBCASE("scale_rows, vstack, concat, slice_cols, xlogx") {
    std::vector<Tensor> leaves = {random_tensor(3, 4, rng),
                                  random_tensor(3, 1, rng),
                                  random_tensor(2, 4, rng)};
    double err = grad_check(
        [](Tape& t, const std::vector<Var>& v) {
          Var sr = t.scale_rows(v[0], v[1]);
          Var st = t.vstack(sr, v[2]);
          Var cc = t.concat_cols(st, st);
          Var sc = t.slice_cols(cc, 1, 5);
          Var pos = t.row_softmax(sc, 1.0);
          return t.sum(t.xlogx(pos));
        },
        leaves, 1e-5);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("map_unary extension point reports a broken backward rule") {
  Rng rng(11);
  std::vector<Tensor> leaves = {random_tensor(2, 3, rng)};
  double err = grad_check(
      [](Tape& t, const std::vector<Var>& v) {
        // sign-flipped derivative
        Var bad = t.map_unary(
            v[0], "bad_sigmoid",
            [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
            [](double, double y) { return -y * (1.0 - y); });
        return t.sum(bad);
      },
      leaves, 1e-5);
  CHECK(err > 0.1);
}

TEST_CASE("forward results are bit-identical across repeated runs") {
  Rng rng(23);
  Tensor a = random_tensor(6, 6, rng), b = random_tensor(6, 6, rng);
  auto run = [&] {
    Tape t;
    Var va = t.leaf(a), vb = t.leaf(b);
    Var out = t.row_softmax(t.matmul(t.sigmoid(va), vb), 2.0);
    return t.value(out).v;
  };
  CHECK(run() == run());
}

TEST_CASE("matmul associativity on random 8x8 chains") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor a = random_tensor(8, 8, rng), b = random_tensor(8, 8, rng),
           c = random_tensor(8, 8, rng);
    Tape t;
    Var va = t.leaf(a), vb = t.leaf(b), vc = t.leaf(c);
    const Tensor& left = t.value(t.matmul(t.matmul(va, vb), vc));
    const Tensor& right = t.value(t.matmul(va, t.matmul(vb, vc)));
    double max_rel = 0.0;
    for (size_t i = 0; i < left.v.size(); ++i) {
      const double denom = std::max(std::fabs(left.v[i]), 1.0);
      max_rel = std::max(max_rel, std::fabs(left.v[i] - right.v[i]) / denom);
    }
    CHECK(max_rel < 1e-10);
  }
}

TEST_CASE("kink margin tracks relu, abs and cosine ties") {
  Tape t;
  Var x = t.leaf(Tensor::from(1, 2, {0.5, -0.002}));
  t.relu(x);
  CHECK(t.kink_margin() == doctest::Approx(0.002));
}

TEST_CASE("finite forward values on finite inputs") {
  Rng rng(41);
  Tape t;
  Var a = t.leaf(random_tensor(5, 5, rng, -30, 30));
  Var b = t.leaf(random_tensor(5, 5, rng, -30, 30));
  Var out = t.row_softmax(t.matmul(t.sigmoid(a), t.relu(b)), 1.0);
  CHECK(all_finite(t.value(out)));
  CHECK(all_finite(t.value(t.row_cosine_max(a, b))));
}
