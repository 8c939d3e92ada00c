#include <cmath>

#include "doctest.h"
#include "lpvdn/midisc.hpp"
#include "oracles.hpp"

using namespace lpvdn;
using namespace lpvdn::midisc;
using diff::Matrix;

namespace {

// -log sigma(t) and -log(1 - sigma(t)) evaluated literally.
double neg_log_sigmoid(double t) { return -std::log(1.0 / (1.0 + std::exp(-t))); }
double neg_log_one_minus_sigmoid(double t) { return -std::log(1.0 - 1.0 / (1.0 + std::exp(-t))); }

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

TEST_CASE("score: zero network gives logit 0, toy matches matmul oracle") {
  diff::Rng rng(1);
  diff::Mlp disc("disc", {3 + 5, 4, 1}, diff::Activation::none, rng);
  Matrix x = oracle::random_matrix(4, 5, rng, 0, 1);
  Matrix z = oracle::random_matrix(4, 3, rng);
  diff::Tape t;
  Matrix s = score(t, disc, t.constant(x), t.constant(z)).value();
  Matrix ref = oracle::mlp(oracle::weights_of(disc), oracle::biases_of(disc), concat(z, x), oracle::Out::linear);
  CHECK(s.cols() == 1);
  CHECK((s - ref).cwiseAbs().maxCoeff() < 1e-14);

  disc.set_zero();
  CHECK(score(t, disc, t.constant(x), t.constant(z)).value().isZero(0));
}

TEST_CASE("score rejects inputs whose concatenation is not J + D") {
  diff::Rng rng(1);
  diff::Mlp disc("disc", {7, 4, 1}, diff::Activation::none, rng);
  diff::Tape t;
  CHECK_THROWS_AS(score(t, disc, t.constant(Matrix::Zero(2, 5)), t.constant(Matrix::Zero(2, 3))), diff::ShapeError);
  CHECK_THROWS_AS(score(t, disc, t.constant(Matrix::Zero(2, 4)), t.constant(Matrix::Zero(3, 3))), diff::ShapeError);
}

TEST_CASE("derangements have no fixed points") {
  diff::Rng rng(9);
  for (int b = 2; b <= 12; ++b) {
    for (int rep = 0; rep < 50; ++rep) {
      auto p = derangement(b, rng);
      CHECK(is_derangement(p));
    }
  }
  CHECK(derangement(1, rng) == std::vector<int>{0});
  CHECK_FALSE(is_derangement(std::vector<int>{1, 0, 2}));
  CHECK_FALSE(is_derangement(std::vector<int>{1, 1, 0}));
  CHECK_THROWS_AS(derangement(0, rng), std::invalid_argument);
}

TEST_CASE("MI loss at zero logits is 2 log 2; saturated logits give ~0") {
  diff::Tape t;
  CHECK(mi_loss_from_logits(t.constant(Matrix::Zero(4, 1)), t.constant(Matrix::Zero(4, 1))).scalar() ==
        doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
  const double sat =
      mi_loss_from_logits(t.constant(Matrix::Constant(4, 1, 20.0)), t.constant(Matrix::Constant(4, 1, -20.0))).scalar();
  CHECK(sat < 1e-8);
  CHECK(sat > 0.0);
}

TEST_CASE("MI loss matches direct per-pair summation") {
  diff::Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    diff::Mlp disc("disc", {2 + 3, 3, 1}, diff::Activation::none, rng);
    Matrix x = oracle::random_matrix(4, 3, rng, 0, 1);
    Matrix z = oracle::random_matrix(4, 2, rng);
    auto perm = derangement(4, rng);
    diff::Tape t;
    const double got = mi_loss(t, disc, t.constant(x), t.constant(z), perm).value.scalar();

    auto w = oracle::weights_of(disc);
    auto b = oracle::biases_of(disc);
    double ref = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double pos = oracle::mlp(w, b, concat(z.row(i), x.row(i)), oracle::Out::linear)(0, 0);
      const double neg = oracle::mlp(w, b, concat(z.row(i), x.row(perm[i])), oracle::Out::linear)(0, 0);
      ref += neg_log_sigmoid(pos) + neg_log_one_minus_sigmoid(neg);
    }
    CHECK(std::abs(got - ref / 4) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("MI loss rejects a permutation with fixed points") {
  diff::Rng rng(2);
  diff::Mlp disc("disc", {3, 2, 1}, diff::Activation::none, rng);
  diff::Tape t;
  std::vector<int> identity{0, 1, 2};
  CHECK_THROWS_AS(mi_loss(t, disc, t.constant(Matrix::Zero(3, 2)), t.constant(Matrix::Zero(3, 1)), identity),
                  std::invalid_argument);
}

TEST_CASE("MI loss stays finite, with finite gradients, at |logit| = 500") {
  for (double s : {500.0, -500.0}) {
    diff::Parameter pos("pos", Matrix::Constant(3, 1, s)), neg("neg", Matrix::Constant(3, 1, -s));
    diff::Tape t;
    Var l = mi_loss_from_logits(t.param(pos), t.param(neg));
    t.backward(l);
    CHECK(std::isfinite(l.scalar()));
    CHECK(pos.grad.allFinite());
    CHECK(neg.grad.allFinite());
    if (s < 0) CHECK(l.scalar() == doctest::Approx(1000.0));
  }
}

TEST_CASE("softplus stays within the margin-loss bound for t <= -3") {
  const double gamma = 3.0;
  const double value_bound = std::log1p(std::exp(-gamma));
  const double grad_bound = std::exp(-gamma) / (1 + std::exp(-gamma));
  CHECK(value_bound == doctest::Approx(0.0486).epsilon(1e-3));
  CHECK(grad_bound == doctest::Approx(0.0474).epsilon(1e-3));
  for (double t = -gamma; t >= -60.0; t -= 0.01) {
    CHECK(diff::softplus(t) <= value_bound);
    CHECK(diff::sigmoid(t) <= grad_bound);
  }
}

TEST_CASE("MI loss gradient through encoder and discriminator matches finite differences") {
  diff::Rng rng(13);
  diff::Mlp enc("enc", {5, 4, 3}, diff::Activation::none, rng);
  diff::Mlp disc("disc", {3 + 5, 6, 1}, diff::Activation::none, rng);
  Matrix x = oracle::random_matrix(5, 5, rng, 0, 1);
  auto perm = derangement(5, rng);
  auto loss = [&](diff::Tape& t) {
    Var xv = t.constant(x);
    return mi_loss(t, disc, xv, enc.forward(t, xv), perm).value;
  };
  std::vector<diff::Parameter*> ps = enc.parameters();
  for (auto* p : disc.parameters()) ps.push_back(p);
  CHECK(diff::grad_check(loss, ps) < 1e-4);
}
