#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stf/tape.hpp"

using stf::DenseArray;
using stf::ad::Act;
using stf::ad::Tape;
using stf::ad::Var;

TEST_CASE("matmul identity and zero rows") {
  Tape t;
  Var eye = t.leaf(DenseArray({2, 2}, {1, 0, 0, 1}));
  Var m = t.leaf(DenseArray({2, 2}, {1, 2, 3, 4}));
  const DenseArray& c = t.value(t.matmul(eye, m));
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == 2.0);
  CHECK(c(1, 0) == 3.0);
  CHECK(c(1, 1) == 4.0);

  Var a = t.leaf(DenseArray({2, 2}, {1, 0, 0, 0}));
  Var b = t.leaf(DenseArray({2, 1}, {0, 5}));
  const DenseArray& z = t.value(t.matmul(a, b));
  CHECK(z(0, 0) == 0.0);
  CHECK(z(1, 0) == 0.0);
}

TEST_CASE("matmul against triple-loop oracle") {
  stf::Rng rng(42);
  DenseArray a = DenseArray::randn({4, 3}, rng);
  DenseArray b = DenseArray::randn({3, 2}, rng);
  Tape t;
  const DenseArray& c = t.value(t.matmul(t.leaf(a), t.leaf(b)));
  DenseArray ref = oracle::matmul(a, b);
  for (long i = 0; i < c.numel(); ++i) CHECK(std::fabs(c[i] - ref[i]) < 1e-12);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape t;
  Var a = t.leaf(DenseArray({2, 3}));
  Var b = t.leaf(DenseArray({2, 2}));
  CHECK_THROWS_AS((void)t.matmul(a, b), stf::DimensionError);
}

TEST_CASE("softmax of constant row is uniform") {
  Tape t;
  const DenseArray& y = t.value(t.softmax_rows(t.leaf(DenseArray({1, 3}, {0, 0, 0}))));
  for (long j = 0; j < 3; ++j) CHECK(y[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax survives huge logits via max subtraction") {
  Tape t;
  const DenseArray& y = t.value(t.softmax_rows(t.leaf(DenseArray({1, 2}, {1000, 0}))));
  CHECK(std::isfinite(y[0]));
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] >= 0.0);
  CHECK(y[1] < 1e-300);
}

TEST_CASE("softmax matches exp-normalize oracle") {
  Tape t;
  const DenseArray& y = t.value(t.softmax_rows(t.leaf(DenseArray({1, 3}, {1, 2, 3}))));
  auto ref = oracle::softmax_row({1, 2, 3});
  for (long j = 0; j < 3; ++j) CHECK(std::fabs(y[j] - ref[static_cast<std::size_t>(j)]) < 1e-12);
}

TEST_CASE("softmax rows sum to one and stay positive") {
  stf::Rng rng(7);
  Tape t;
  const DenseArray& y = t.value(t.softmax_rows(t.leaf(DenseArray::randn({20, 13}, rng, 10.0))));
  for (long i = 0; i < 20; ++i) {
    double sum = 0.0;
    for (long j = 0; j < 13; ++j) {
      CHECK(y(i, j) > 0.0);
      sum += y(i, j);
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("layer_norm constant row collapses to beta") {
  Tape t;
  Var gamma = t.leaf(DenseArray::full({4}, 1.0));
  Var beta = t.leaf(DenseArray({4}));
  const DenseArray& y = t.value(t.layer_norm(t.leaf(DenseArray::full({1, 4}, 3.5)), gamma, beta));
  for (long j = 0; j < 4; ++j) CHECK(std::fabs(y[j]) < 1e-2);
}

TEST_CASE("layer_norm symmetric two-point row") {
  Tape t;
  Var gamma = t.leaf(DenseArray::full({2}, 1.0));
  Var beta = t.leaf(DenseArray({2}));
  const DenseArray& y = t.value(t.layer_norm(t.leaf(DenseArray({1, 2}, {-1, 1})), gamma, beta));
  CHECK(std::fabs(y[0] + 1.0) < 1e-4);
  CHECK(std::fabs(y[1] - 1.0) < 1e-4);
}

TEST_CASE("layer_norm zero gamma yields beta everywhere") {
  stf::Rng rng(3);
  Tape t;
  Var gamma = t.leaf(DenseArray({5}));
  Var beta = t.leaf(DenseArray::full({5}, 5.0));
  const DenseArray& y = t.value(t.layer_norm(t.leaf(DenseArray::randn({3, 5}, rng)), gamma, beta));
  for (long i = 0; i < y.numel(); ++i) CHECK(y[i] == 5.0);
}

TEST_CASE("activations at reference points") {
  Tape t;
  const DenseArray& r = t.value(t.activation(t.leaf(DenseArray({1, 3}, {-2, 0, 3})), Act::Relu));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 3.0);
  const DenseArray& th = t.value(t.activation(t.leaf(DenseArray({1, 1}, {0})), Act::Tanh));
  CHECK(th[0] == 0.0);
  const DenseArray& sg = t.value(t.activation(t.leaf(DenseArray({1, 1}, {0})), Act::Sigmoid));
  CHECK(sg[0] == 0.5);
}

TEST_CASE("l1 loss hand sums") {
  Tape t;
  auto r1 = t.l1_loss(t.leaf(DenseArray({1, 2}, {1, 2})), DenseArray({1, 2}, {0, 0}), nullptr);
  CHECK(t.value(r1.loss)[0] == doctest::Approx(1.5));

  auto r2 = t.l1_loss(t.leaf(DenseArray({1, 2}, {1, 2})), DenseArray({1, 2}, {1, 2}), nullptr);
  CHECK(t.value(r2.loss)[0] == 0.0);

  DenseArray mask({1, 3}, {1, 0, 1});
  auto r3 = t.l1_loss(t.leaf(DenseArray({1, 3}, {1, 2, 3})), DenseArray({1, 3}, {0, 0, 0}), &mask);
  CHECK(t.value(r3.loss)[0] == doctest::Approx(2.0));
  CHECK(r3.count == 2.0);
}

TEST_CASE("l1 loss with all-zero mask is defined zero with warning") {
  Tape t;
  DenseArray mask({1, 2}, {0, 0});
  auto r = t.l1_loss(t.leaf(DenseArray({1, 2}, {1, 2})), DenseArray({1, 2}, {0, 0}), &mask);
  CHECK(t.value(r.loss)[0] == 0.0);
  CHECK(r.all_masked);
}

TEST_CASE("masked l1 equals the loss on the explicit unmasked subset") {
  stf::Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    DenseArray pred = DenseArray::randn({4, 6}, rng);
    DenseArray target = DenseArray::randn({4, 6}, rng);
    DenseArray mask({4, 6});
    for (long i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;

    Tape t;
    auto masked = t.l1_loss(t.leaf(pred), target, &mask);

    // Brute-force: gather the selected entries and take the plain mean.
    double sum = 0.0, count = 0.0;
    for (long i = 0; i < mask.numel(); ++i) {
      if (mask[i] == 0.0) continue;
      sum += std::fabs(pred[i] - target[i]);
      count += 1.0;
    }
    const double expected = count > 0.0 ? sum / count : 0.0;
    CHECK(t.value(masked.loss)[0] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("kernel outputs stay finite on random input") {
  stf::Rng rng(23);
  Tape t;
  Var x = t.leaf(DenseArray::randn({8, 5}, rng, 100.0));
  CHECK(t.value(t.softmax_rows(x)).all_finite());
  Var g = t.leaf(DenseArray::full({5}, 1.0));
  Var b = t.leaf(DenseArray({5}));
  CHECK(t.value(t.layer_norm(x, g, b)).all_finite());
  CHECK(t.value(t.activation(x, Act::Tanh)).all_finite());
}
