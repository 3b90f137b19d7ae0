#include <doctest.h>

#include <filesystem>

#include "flowvar/errors.hpp"
#include "flowvar/fields.hpp"

using namespace flowvar;

TEST_CASE("cf_eval at t=0 is theta + Theta x") {
  ClosedFormField f;
  f.Theta.resize(2, 2);
  f.Theta << 1.0, 2.0, 3.0, 4.0;
  f.theta = Eigen::Vector2d(0.5, -0.5);
  const Eigen::Vector2d x(1.0, 1.0);
  const Eigen::VectorXd v = cf_eval(f, x, 0.0);
  const Eigen::Vector2d expected = f.theta + f.Theta * x;
  CHECK((v - expected).norm() < 1e-14);
}

TEST_CASE("cf_eval with Theta = I is x/(1+t)") {
  ClosedFormField f{Eigen::MatrixXd::Identity(2, 2),
                    Eigen::VectorXd::Zero(2)};
  const Eigen::Vector2d x(2.0, -4.0);
  for (const double t : {0.1, 0.5, 0.9}) {
    const Eigen::VectorXd v = cf_eval(f, x, t);
    CHECK((v - x / (1.0 + t)).norm() < 1e-13);
  }
}

TEST_CASE("cf_eval with zero Theta is the constant translation") {
  ClosedFormField f{Eigen::MatrixXd::Zero(3, 3),
                    Eigen::VectorXd::Constant(3, 2.5)};
  Eigen::VectorXd x(3);
  x << 1, 2, 3;
  for (const double t : {0.0, 0.3, 1.0}) {
    CHECK((cf_eval(f, x, t) - f.theta).norm() < 1e-14);
  }
}

TEST_CASE("cf_eval matches the explicit inverse on well-conditioned input") {
  Rng rng(1);
  const int d = 4;
  Eigen::MatrixXd theta_mat(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      theta_mat(i, j) = 0.3 * rng.normal();
    }
  }
  ClosedFormField f{theta_mat, Eigen::VectorXd::Ones(d)};
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.normal();
  for (const double t : {0.2, 0.7}) {
    const Eigen::MatrixXd inv =
        (Eigen::MatrixXd::Identity(d, d) + t * theta_mat).inverse();
    const Eigen::VectorXd direct = f.theta + theta_mat * inv * (x - t * f.theta);
    CHECK((cf_eval(f, x, t) - direct).norm() < 1e-10);
  }
}

TEST_CASE("cf_optimal_params trivial targets") {
  const ClosedFormField zero = cf_optimal_params(GaussianSpec::standard(2));
  CHECK(zero.Theta.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(zero.theta.cwiseAbs().maxCoeff() < 1e-12);

  const ClosedFormField two = cf_optimal_params(
      GaussianSpec::isotropic(Eigen::Vector2d(5.0, -1.0), 2.0));
  CHECK((two.Theta - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((two.theta - Eigen::Vector2d(5.0, -1.0)).norm() < 1e-12);
}

TEST_CASE("optimal field is constant along its own transport chords") {
  Rng rng(2);
  Eigen::Matrix2d cov;
  cov << 3.0, 0.7, 0.7, 1.5;
  const GaussianSpec target{Eigen::Vector2d(4.0, 4.0), cov};
  const ClosedFormField f = cf_optimal_params(target);
  const Eigen::MatrixXd s = sqrt_pd(cov);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::Vector2d x0(rng.normal(), rng.normal());
    const Eigen::Vector2d x1 = s * x0 + target.mean;
    const Eigen::Vector2d displacement = x1 - x0;
    for (const double t : default_t_grid()) {
      const Eigen::Vector2d xt = (1.0 - t) * x0 + t * x1;
      CHECK((cf_eval(f, xt, t) - displacement).norm() < 1e-10);
    }
  }
}

TEST_CASE("rot params: zero angle equals the optimal params") {
  const GaussianSpec target =
      GaussianSpec::isotropic(Eigen::Vector2d(1.0, 1.0), 3.0);
  const ClosedFormField a = cf_optimal_params(target);
  const ClosedFormField b =
      cf_rot_params(target, RotationSpec{0.0, 0, 1, 2});
  CHECK((a.Theta - b.Theta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rot params at 180 degrees with identity covariance degenerate") {
  const GaussianSpec target =
      GaussianSpec::isotropic(Eigen::Vector2d(5.0, 5.0), 1.0);
  CHECK_THROWS_AS((void)cf_rot_params(target, RotationSpec{180.0, 0, 1, 2}),
                  SingularityError);
}

TEST_CASE("rot90 field is constant along the rotated chords") {
  const GaussianSpec target =
      GaussianSpec::isotropic(Eigen::Vector2d(2.0, -3.0), 1.0);
  const RotationSpec rot{90.0, 0, 1, 2};
  const ClosedFormField f = cf_rot_params(target, rot);
  const Eigen::MatrixXd r = rotation_matrix(rot);
  Rng rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::Vector2d x0(rng.normal(), rng.normal());
    const Eigen::Vector2d x1 = r * x0 + target.mean;
    const Eigen::Vector2d displacement = x1 - x0;
    for (const double t : default_t_grid()) {
      const Eigen::Vector2d xt = (1.0 - t) * x0 + t * x1;
      CHECK((cf_eval(f, xt, t) - displacement).norm() < 1e-8);
    }
  }
}

TEST_CASE("singular time is named in the error") {
  // Theta = -2I makes (I + t Theta) singular at t = 1/2.
  ClosedFormField f{-2.0 * Eigen::MatrixXd::Identity(2, 2),
                    Eigen::VectorXd::Zero(2)};
  try {
    (void)cf_eval(f, Eigen::Vector2d(1.0, 1.0), 0.5);
    FAIL("expected SingularityError");
  } catch (const SingularityError& e) {
    CHECK(e.t == 0.5);
  }
}

TEST_CASE("memorizing field returns stored displacements exactly") {
  CouplingBatch batch;
  batch.x0.resize(3, 2);
  batch.x0 << 0, 0, 1, 0, 0, 1;
  batch.x1.resize(3, 2);
  batch.x1 << 1, 1, 2, 3, -1, 4;
  batch.kind = PairingKind::random();
  Eigen::MatrixXd times(3, 2);
  times << 0.25, 0.5, 0.1, 0.9, 0.4, 0.6;
  const MemorizingField field = build_memorizing_field(batch, times, 1e-9);
  for (int i = 0; i < 3; ++i) {
    const Eigen::RowVector2d expected = batch.x1.row(i) - batch.x0.row(i);
    for (int j = 0; j < 2; ++j) {
      const double t = times(i, j);
      const Eigen::RowVector2d key =
          (1.0 - t) * batch.x0.row(i) + t * batch.x1.row(i);
      const Eigen::VectorXd v = field.eval(key.transpose(), t);
      CHECK((v.transpose() - expected).norm() == 0.0);
    }
  }
}

TEST_CASE("memorizing field rejects ambiguous keys") {
  // Same interpolant point and time, two different displacements.
  Eigen::MatrixXd keys(2, 3);
  keys << 0.5, 0.5, 0.3, 0.5, 0.5, 0.3;
  Eigen::MatrixXd disp(2, 2);
  disp << 1.0, 0.0, 0.0, 1.0;
  CHECK_THROWS_AS(MemorizingField(keys, disp, 1e-9), AmbiguityError);
}

TEST_CASE("duplicate keys with identical displacements are fine") {
  Eigen::MatrixXd keys(2, 3);
  keys << 0.5, 0.5, 0.3, 0.5, 0.5, 0.3;
  Eigen::MatrixXd disp(2, 2);
  disp << 1.0, 0.0, 1.0, 0.0;
  CHECK_NOTHROW(MemorizingField(keys, disp, 1e-9));
}

TEST_CASE("rot180 datasets build without ambiguity across seeds") {
  // interpolants all cross at t = 1/2, but sampled times are almost surely
  // distinct, so stored keys stay separated
  const GaussianSpec source = GaussianSpec::standard(2);
  const GaussianSpec target =
      GaussianSpec::isotropic(Eigen::Vector2d(5.0, 5.0), 1.0);
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    Rng rng(seed);
    const CouplingBatch batch = make_pairing(
        PairingKind::rot(RotationSpec{180.0, 0, 1, 2}), source, target, 1000,
        rng);
    Rng time_rng = rng.child(1);
    CHECK_NOTHROW(
        (void)build_memorizing_field(batch, 10, 1e-9, time_rng));
  }
}

TEST_CASE("nearest-key fallback off the stored set") {
  CouplingBatch batch;
  batch.x0.resize(1, 1);
  batch.x0 << 0.0;
  batch.x1.resize(1, 1);
  batch.x1 << 2.0;
  batch.kind = PairingKind::ot();
  Eigen::MatrixXd times(1, 1);
  times << 0.5;
  const MemorizingField field = build_memorizing_field(batch, times, 1e-9);
  Eigen::VectorXd q(1);
  q << 100.0;
  CHECK(field.eval(q, 0.9)(0) == 2.0);
}

TEST_CASE("kd tree lookup agrees with linear scan on random data") {
  Rng rng(17);
  CouplingBatch batch;
  batch.x0.resize(200, 3);
  batch.x1.resize(200, 3);
  for (int i = 0; i < 200; ++i) {
    for (int j = 0; j < 3; ++j) {
      batch.x0(i, j) = rng.normal();
      batch.x1(i, j) = rng.normal();
    }
  }
  batch.kind = PairingKind::random();
  Rng time_rng(18);
  const MemorizingField field =
      build_memorizing_field(batch, 4, 1e-12, time_rng);
  const auto& keys = field.keys();
  const auto& disp = field.displacements();
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd q(3);
    for (int j = 0; j < 3; ++j) q(j) = 2.0 * rng.normal();
    const double t = rng.uniform();
    Eigen::VectorXd full(4);
    full.head(3) = q;
    full(3) = t;
    Eigen::Index best = 0;
    double best_d = (keys.row(0).transpose() - full).squaredNorm();
    for (Eigen::Index k = 1; k < keys.rows(); ++k) {
      const double dist = (keys.row(k).transpose() - full).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    CHECK((field.eval(q, t).transpose() - disp.row(best)).norm() == 0.0);
  }
}

TEST_CASE("field json round trip") {
  const auto dir =
      std::filesystem::temp_directory_path() / "flowvar_fields_test";
  std::filesystem::create_directories(dir);

  ClosedFormField cf{Eigen::MatrixXd::Identity(2, 2) * 1.5,
                     Eigen::Vector2d(1.0, -2.0)};
  save_field(dir / "cf.json", FieldVariant(cf));
  const auto cf_back =
      std::get<ClosedFormField>(load_field(dir / "cf.json"));
  CHECK((cf_back.Theta - cf.Theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((cf_back.theta - cf.theta).norm() == 0.0);

  Rng rng(5);
  const MlpField mlp = MlpField::init(2, 8, rng);
  save_field(dir / "mlp.json", FieldVariant(mlp));
  const auto mlp_back = std::get<MlpField>(load_field(dir / "mlp.json"));
  CHECK((mlp_back.flatten() - mlp.flatten()).cwiseAbs().maxCoeff() == 0.0);

  std::filesystem::remove_all(dir);
}
