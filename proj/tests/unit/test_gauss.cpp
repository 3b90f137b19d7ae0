#include <doctest.h>

#include <cmath>
#include <numbers>

#include "flowvar/errors.hpp"
#include "flowvar/gauss.hpp"

using namespace flowvar;

namespace {

Eigen::MatrixXd random_pd(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      a(i, j) = rng.normal();
    }
  }
  Eigen::MatrixXd m = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(d, d);
  return 0.5 * (m + m.transpose());
}

}  // namespace

TEST_CASE("sqrt_pd identity and diagonal cases") {
  CHECK((sqrt_pd(Eigen::MatrixXd::Identity(2, 2)) -
         Eigen::MatrixXd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
  diag(0, 0) = 4.0;
  diag(1, 1) = 9.0;
  const Eigen::MatrixXd s = sqrt_pd(diag);
  CHECK(s(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s(1, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(std::abs(s(0, 1)) < 1e-14);
}

TEST_CASE("sqrt_pd squares back to the input") {
  Rng rng(12);
  for (int d : {2, 5, 17}) {
    const Eigen::MatrixXd m = random_pd(d, rng);
    const Eigen::MatrixXd s = sqrt_pd(m);
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((s * s - m).norm() < 1e-8);
    // functions of one eigenbasis commute
    CHECK((s * m - m * s).norm() < 1e-8);
  }
}

TEST_CASE("sqrt_pd rejects bad inputs") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS((void)sqrt_pd(asym), ShapeError);
  Eigen::MatrixXd npd = Eigen::MatrixXd::Identity(2, 2);
  npd(1, 1) = -1.0;
  CHECK_THROWS_AS((void)sqrt_pd(npd), DomainError);
  CHECK_THROWS_AS((void)sqrt_pd(Eigen::MatrixXd::Zero(2, 3)), ShapeError);
}

TEST_CASE("rotation_matrix standard forms") {
  const RotationSpec zero{0.0, 0, 1, 3};
  CHECK((rotation_matrix(zero) - Eigen::MatrixXd::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  const RotationSpec r180{180.0, 0, 1, 2};
  const Eigen::MatrixXd m180 = rotation_matrix(r180);
  CHECK(m180(0, 0) == doctest::Approx(-1.0));
  CHECK(m180(1, 1) == doctest::Approx(-1.0));
  CHECK(std::abs(m180(0, 1)) < 1e-12);

  const RotationSpec r90{90.0, 0, 1, 2};
  const Eigen::MatrixXd m90 = rotation_matrix(r90);
  CHECK(m90(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(m90(0, 1) == doctest::Approx(-1.0));
  CHECK(m90(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("rotation matrices are orthonormal with unit determinant") {
  Rng rng(3);
  for (int i = 0; i < 8; ++i) {
    const RotationSpec spec{360.0 * rng.uniform() - 180.0, 1, 3, 5};
    const Eigen::MatrixXd r = rotation_matrix(spec);
    CHECK((r.transpose() * r - Eigen::MatrixXd::Identity(5, 5))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    Eigen::VectorXd x(5);
    for (int j = 0; j < 5; ++j) x(j) = rng.normal();
    CHECK(std::abs((r * x).norm() - x.norm()) < 1e-10);
  }
}

TEST_CASE("rotation_matrix rejects bad planes") {
  CHECK_THROWS_AS((void)rotation_matrix(RotationSpec{10.0, 1, 1, 3}),
                  DomainError);
  CHECK_THROWS_AS((void)rotation_matrix(RotationSpec{10.0, 0, 4, 3}),
                  DomainError);
}

TEST_CASE("sample_gaussian law of large numbers") {
  const GaussianSpec spec = GaussianSpec::standard(2);
  Rng rng(1234);
  const Eigen::MatrixXd x = sample_gaussian(spec, 100000, rng);
  CHECK(x.col(0).mean() == doctest::Approx(0.0).epsilon(0.02));
  CHECK(std::abs(x.col(1).mean()) < 0.02);
}

TEST_CASE("sample_gaussian identity covariance shifts by the mean") {
  GaussianSpec spec = GaussianSpec::standard(3);
  spec.mean << 10.0, -10.0, 3.0;
  Rng rng(77);
  const Eigen::MatrixXd x = sample_gaussian(spec, 1, rng);
  Rng rng2(77);
  Eigen::VectorXd z(3);
  rng2.fill_normal(z.data(), 3);
  CHECK((x.row(0).transpose() - (spec.mean + z)).norm() < 1e-12);
}

TEST_CASE("sampling is bit-reproducible") {
  const GaussianSpec spec = GaussianSpec::isotropic(Eigen::Vector2d(1, 2), 3.0);
  Rng a(5), b(5);
  const Eigen::MatrixXd xa = sample_gaussian(spec, 64, a);
  const Eigen::MatrixXd xb = sample_gaussian(spec, 64, b);
  CHECK((xa - xb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single component gmm matches the gaussian stream") {
  GmmSpec gmm;
  gmm.components.push_back({1.0, GaussianSpec::standard(2)});
  Rng a(9), b(9);
  const Eigen::MatrixXd xa = sample_gmm(gmm, 32, a);
  const Eigen::MatrixXd xb = sample_gaussian(GaussianSpec::standard(2), 32, b);
  CHECK((xa - xb).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-weight component never selected") {
  GmmSpec gmm;
  GaussianSpec far = GaussianSpec::standard(1);
  far.mean << 1000.0;
  gmm.components.push_back({1.0, GaussianSpec::standard(1)});
  gmm.components.push_back({0.0, far});
  Rng rng(4);
  const Eigen::MatrixXd x = sample_gmm(gmm, 2000, rng);
  CHECK(x.cwiseAbs().maxCoeff() < 100.0);
}

TEST_CASE("gmm component frequencies follow the weights") {
  GmmSpec gmm;
  GaussianSpec left = GaussianSpec::standard(1);
  left.mean << -50.0;
  GaussianSpec right = GaussianSpec::standard(1);
  right.mean << 50.0;
  gmm.components.push_back({0.3, left});
  gmm.components.push_back({0.7, right});
  Rng rng(21);
  const Eigen::MatrixXd x = sample_gmm(gmm, 10000, rng);
  const double frac_left =
      static_cast<double>((x.col(0).array() < 0.0).count()) / 10000.0;
  CHECK(std::abs(frac_left - 0.3) < 0.02);
}

TEST_CASE("gmm_log_prob standard normal reference values") {
  GmmSpec gmm2;
  gmm2.components.push_back({1.0, GaussianSpec::standard(2)});
  CHECK(gmm_log_prob(gmm2, Eigen::Vector2d(0, 0)) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-12));

  GmmSpec gmm1;
  gmm1.components.push_back({1.0, GaussianSpec::standard(1)});
  Eigen::VectorXd one(1);
  one << 1.0;
  CHECK(gmm_log_prob(gmm1, one) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi) - 0.5)
            .epsilon(1e-12));
}

TEST_CASE("gmm_log_prob far into one component is weight + density") {
  GmmSpec gmm;
  GaussianSpec a = GaussianSpec::standard(2);
  GaussianSpec b = GaussianSpec::standard(2);
  b.mean << 100.0, 100.0;
  gmm.components.push_back({0.25, a});
  gmm.components.push_back({0.75, b});
  const Eigen::Vector2d x(0.1, -0.2);
  GmmSpec only_a;
  only_a.components.push_back({1.0, a});
  const double expected = std::log(0.25) + gmm_log_prob(only_a, x);
  CHECK(gmm_log_prob(gmm, x) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("one-component gmm density equals the closed form everywhere") {
  Rng rng(31);
  const Eigen::MatrixXd cov = random_pd(3, rng);
  GaussianSpec g{Eigen::Vector3d(1.0, -2.0, 0.5), cov};
  GmmSpec gmm;
  gmm.components.push_back({1.0, g});
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x(j) = 3.0 * rng.normal();
    const Eigen::VectorXd diff = x - g.mean;
    const double quad = diff.dot(cov.llt().solve(diff));
    const double logdet = std::log(cov.determinant());
    const double expected =
        -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + logdet + quad);
    CHECK(gmm_log_prob(gmm, x) == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("gmm_log_prob rejects dimension mismatch") {
  GmmSpec gmm;
  gmm.components.push_back({1.0, GaussianSpec::standard(2)});
  Eigen::VectorXd x(3);
  x.setZero();
  CHECK_THROWS_AS((void)gmm_log_prob(gmm, x), ShapeError);
}

TEST_CASE("spec validation catches weight and dimension errors") {
  GmmSpec gmm;
  gmm.components.push_back({0.6, GaussianSpec::standard(2)});
  gmm.components.push_back({0.6, GaussianSpec::standard(2)});
  CHECK_THROWS_AS(gmm.validate(), DomainError);

  GmmSpec mixed;
  mixed.components.push_back({0.5, GaussianSpec::standard(2)});
  mixed.components.push_back({0.5, GaussianSpec::standard(3)});
  CHECK_THROWS_AS(mixed.validate(), ShapeError);
}
