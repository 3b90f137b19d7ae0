#include <doctest.h>

#include <cmath>

#include "flowvar/mlp.hpp"

using namespace flowvar;

TEST_CASE("selu reference values") {
  CHECK(selu(0.0) == 0.0);
  CHECK(selu(1.0) == doctest::Approx(kSeluLambda));
  // limit for very negative inputs: -lambda * alpha
  CHECK(selu(-40.0) ==
        doctest::Approx(-kSeluLambda * kSeluAlpha).epsilon(1e-12));
  CHECK(selu(-40.0) == doctest::Approx(-1.7580993408473766).epsilon(1e-10));
  CHECK(selu_grad(2.0) == doctest::Approx(kSeluLambda));
  CHECK(selu_grad(-1.0) ==
        doctest::Approx(kSeluLambda * kSeluAlpha * std::exp(-1.0)));
}

TEST_CASE("zero weights produce the output bias everywhere") {
  Rng rng(1);
  MlpField f = MlpField::init(3, 16, rng);
  f.w1.setZero();
  f.w2.setZero();
  f.w3.setZero();
  f.b1.setZero();
  f.b2.setZero();
  f.b3 << 1.0, -2.0, 0.5;
  Eigen::MatrixXd x(5, 3);
  x.setRandom();
  const Eigen::MatrixXd out = mlp_forward(f, x, 0.7);
  for (int i = 0; i < 5; ++i) {
    CHECK((out.row(i) - f.b3.transpose()).norm() == 0.0);
  }
}

namespace {

// Central finite differences of a scalar contraction of the forward map.
double loss_of(const MlpField& f, const Eigen::MatrixXd& x,
               const Eigen::VectorXd& t, const Eigen::MatrixXd& weight) {
  return (mlp_forward(f, x, t).cwiseProduct(weight)).sum();
}

}  // namespace

TEST_CASE("backward gradients match central finite differences") {
  Rng rng(42);
  const int d = 2;
  MlpField f = MlpField::init(d, 8, rng);
  const int n = 5;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
  }
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t(i) = rng.uniform();
  Eigen::MatrixXd weight(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) weight(i, j) = rng.normal();
  }

  MlpCache cache;
  (void)mlp_forward_cached(f, x, t, cache);
  Eigen::MatrixXd input_grad;
  const MlpGrads grads = mlp_backward(f, cache, weight, &input_grad);
  const Eigen::VectorXd flat = grads.flatten();

  const double h = 1e-5;
  Eigen::VectorXd params = f.flatten();
  double max_rel = 0.0;
  for (Eigen::Index k = 0; k < params.size(); ++k) {
    MlpField fp = f;
    MlpField fm = f;
    Eigen::VectorXd pp = params, pm = params;
    pp(k) += h;
    pm(k) -= h;
    fp.unflatten(pp);
    fm.unflatten(pm);
    const double fd =
        (loss_of(fp, x, t, weight) - loss_of(fm, x, t, weight)) / (2.0 * h);
    const double denom = std::max(std::abs(fd), 1e-8);
    max_rel = std::max(max_rel, std::abs(fd - flat(k)) / denom);
  }
  CHECK(max_rel < 1e-4);

  // input gradient against finite differences too
  double max_rel_in = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      Eigen::MatrixXd xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fd =
          (loss_of(f, xp, t, weight) - loss_of(f, xm, t, weight)) / (2.0 * h);
      const double denom = std::max(std::abs(fd), 1e-8);
      max_rel_in =
          std::max(max_rel_in, std::abs(fd - input_grad(i, j)) / denom);
    }
  }
  CHECK(max_rel_in < 1e-4);
}

TEST_CASE("flatten and unflatten round trip") {
  Rng rng(9);
  MlpField f = MlpField::init(4, 8, rng);
  const Eigen::VectorXd p = f.flatten();
  MlpField g = MlpField::init(4, 8, rng);
  g.unflatten(p);
  CHECK((g.flatten() - p).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.w2 - f.w2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("init is seeded and bounded by fan-in") {
  Rng a(3), b(3);
  const MlpField fa = MlpField::init(2, 64, a);
  const MlpField fb = MlpField::init(2, 64, b);
  CHECK((fa.flatten() - fb.flatten()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fa.w1.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(fa.w2.cwiseAbs().maxCoeff() <= 1.0 / 8.0);
  CHECK(fa.b1.cwiseAbs().maxCoeff() == 0.0);
}
