#pragma once

#include <Eigen/Dense>
#include <vector>

#include "flowvar/rng.hpp"

namespace flowvar {

inline constexpr double kSymmetryTol = 1e-10;
inline constexpr double kPdEigTol = 1e-12;

// A Gaussian marginal N(mean, cov); cov must be symmetric positive definite.
struct GaussianSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
  void validate() const;

  static GaussianSpec standard(int d);
  // N(mu, s^2 I): covariance sqrt is s*I.
  static GaussianSpec isotropic(Eigen::VectorXd mu, double s);
};

struct GmmComponent {
  double weight = 0.0;
  GaussianSpec gaussian;
};

struct GmmSpec {
  std::vector<GmmComponent> components;

  int dim() const;
  void validate() const;
};

// Counterclockwise rotation by angle_degrees in the (axis_i, axis_j)
// coordinate plane of R^dim; identity on the remaining axes.
struct RotationSpec {
  double angle_degrees = 0.0;
  int axis_i = 0;
  int axis_j = 1;
  int dim = 2;

  void validate() const;
};

// Symmetric principal square root of a symmetric positive definite matrix,
// via self-adjoint eigendecomposition. Throws ShapeError on asymmetry,
// DomainError when the smallest eigenvalue is not positive.
Eigen::MatrixXd sqrt_pd(const Eigen::MatrixXd& m);

// Givens rotation matrix for the given plane; R^T R = I, det R = 1.
Eigen::MatrixXd rotation_matrix(const RotationSpec& spec);

// n x d sample matrix, rows are draws of mean + sqrt_pd(cov) * z.
Eigen::MatrixXd sample_gaussian(const GaussianSpec& spec, int n, Rng& rng);

Eigen::MatrixXd sample_gmm(const GmmSpec& spec, int n, Rng& rng);

// log sum_i w_i N(x; mu_i, cov_i), log-sum-exp stabilized.
double gmm_log_prob(const GmmSpec& spec, const Eigen::VectorXd& x);

// Per-row log densities; parallel over rows.
Eigen::VectorXd gmm_log_prob_batch(const GmmSpec& spec,
                                   const Eigen::MatrixXd& xs);

}  // namespace flowvar
