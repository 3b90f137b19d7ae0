#include "flowvar/gauss.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "flowvar/errors.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

void GaussianSpec::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw ShapeError("GaussianSpec: cov must be d x d matching mean length");
  }
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw ShapeError("GaussianSpec: covariance not symmetric within 1e-10");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov,
                                                    Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= kPdEigTol) {
    throw DomainError("GaussianSpec: covariance not positive definite");
  }
}

GaussianSpec GaussianSpec::standard(int d) {
  return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
}

GaussianSpec GaussianSpec::isotropic(Eigen::VectorXd mu, double s) {
  const int d = static_cast<int>(mu.size());
  return {std::move(mu), (s * s) * Eigen::MatrixXd::Identity(d, d)};
}

int GmmSpec::dim() const {
  return components.empty() ? 0 : components.front().gaussian.dim();
}

void GmmSpec::validate() const {
  if (components.empty()) {
    throw ShapeError("GmmSpec: no components");
  }
  const int d = dim();
  double total = 0.0;
  for (const auto& c : components) {
    if (c.weight < 0.0 || c.weight > 1.0) {
      throw DomainError("GmmSpec: component weight outside [0, 1]");
    }
    if (c.gaussian.dim() != d) {
      throw ShapeError("GmmSpec: components disagree on dimension");
    }
    c.gaussian.validate();
    total += c.weight;
  }
  if (std::abs(total - 1.0) > kSymmetryTol) {
    throw DomainError("GmmSpec: weights sum to " + std::to_string(total));
  }
}

void RotationSpec::validate() const {
  if (axis_i == axis_j || axis_i < 0 || axis_j < 0 || axis_i >= dim ||
      axis_j >= dim) {
    throw DomainError("RotationSpec: plane axes must be distinct and < dim");
  }
}

Eigen::MatrixXd sqrt_pd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw ShapeError("sqrt_pd: matrix not square");
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw ShapeError("sqrt_pd: matrix not symmetric within 1e-10");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd evals = es.eigenvalues();
  if (evals.minCoeff() <= kPdEigTol) {
    throw DomainError("sqrt_pd: matrix not positive definite (min eigenvalue " +
                      std::to_string(evals.minCoeff()) + ")");
  }
  return es.eigenvectors() * evals.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Eigen::MatrixXd rotation_matrix(const RotationSpec& spec) {
  spec.validate();
  const double a = spec.angle_degrees * std::numbers::pi / 180.0;
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(spec.dim, spec.dim);
  r(spec.axis_i, spec.axis_i) = std::cos(a);
  r(spec.axis_i, spec.axis_j) = -std::sin(a);
  r(spec.axis_j, spec.axis_i) = std::sin(a);
  r(spec.axis_j, spec.axis_j) = std::cos(a);
  return r;
}

Eigen::MatrixXd sample_gaussian(const GaussianSpec& spec, int n, Rng& rng) {
  spec.validate();
  if (n < 1) {
    throw DomainError("sample_gaussian: n must be >= 1");
  }
  const int d = spec.dim();
  Eigen::MatrixXd z(n, d);
  // Row-major fill so draw order is independent of storage layout.
  std::vector<double> buf(static_cast<std::size_t>(n) * d);
  rng.fill_normal(buf.data(), buf.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      z(i, j) = buf[static_cast<std::size_t>(i) * d + j];
    }
  }
  const Eigen::MatrixXd s = sqrt_pd(spec.cov);
  Eigen::MatrixXd x = z * s;  // s symmetric
  x.rowwise() += spec.mean.transpose();
  return x;
}

Eigen::MatrixXd sample_gmm(const GmmSpec& spec, int n, Rng& rng) {
  spec.validate();
  if (n < 1) {
    throw DomainError("sample_gmm: n must be >= 1");
  }
  const int d = spec.dim();
  const std::size_t k = spec.components.size();
  if (k == 1) {
    // Degenerate mixture consumes the exact same stream as the Gaussian path.
    return sample_gaussian(spec.components.front().gaussian, n, rng);
  }
  std::vector<double> cumulative(k);
  double acc = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    acc += spec.components[c].weight;
    cumulative[c] = acc;
  }
  std::vector<Eigen::MatrixXd> roots;
  std::vector<Eigen::VectorXd> means;
  roots.reserve(k);
  means.reserve(k);
  for (const auto& c : spec.components) {
    roots.push_back(sqrt_pd(c.gaussian.cov));
    means.push_back(c.gaussian.mean);
  }
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd z(d);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t c = 0;
    while (c + 1 < k && u >= cumulative[c]) {
      ++c;
    }
    rng.fill_normal(z.data(), static_cast<std::size_t>(d));
    x.row(i) = (means[c] + roots[c] * z).transpose();
  }
  return x;
}

namespace {

struct GmmDensity {
  std::vector<double> log_weight;
  std::vector<double> log_norm;  // -0.5 (d log 2pi + log det cov)
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
  int d = 0;

  explicit GmmDensity(const GmmSpec& spec) {
    spec.validate();
    d = spec.dim();
    for (const auto& c : spec.components) {
      log_weight.push_back(c.weight > 0.0
                               ? std::log(c.weight)
                               : -std::numeric_limits<double>::infinity());
      llt.emplace_back(c.gaussian.cov);
      double log_det = 0.0;
      const auto& l = llt.back().matrixL();
      for (int i = 0; i < d; ++i) {
        log_det += 2.0 * std::log(l(i, i));
      }
      log_norm.push_back(-0.5 * (d * std::log(2.0 * std::numbers::pi) +
                                 log_det));
    }
  }

  double operator()(const GmmSpec& spec, const Eigen::VectorXd& x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(spec.components.size());
    for (std::size_t c = 0; c < spec.components.size(); ++c) {
      const Eigen::VectorXd diff = x - spec.components[c].gaussian.mean;
      const Eigen::VectorXd w = llt[c].matrixL().solve(diff);
      terms[c] = log_weight[c] + log_norm[c] - 0.5 * w.squaredNorm();
      best = std::max(best, terms[c]);
    }
    double acc = 0.0;
    for (const double term : terms) {
      acc += std::exp(term - best);
    }
    return best + std::log(acc);
  }
};

}  // namespace

double gmm_log_prob(const GmmSpec& spec, const Eigen::VectorXd& x) {
  if (x.size() != spec.dim()) {
    throw ShapeError("gmm_log_prob: point dimension mismatch");
  }
  return GmmDensity(spec)(spec, x);
}

Eigen::VectorXd gmm_log_prob_batch(const GmmSpec& spec,
                                   const Eigen::MatrixXd& xs) {
  if (xs.cols() != spec.dim()) {
    throw ShapeError("gmm_log_prob_batch: dimension mismatch");
  }
  const GmmDensity density(spec);
  Eigen::VectorXd out(xs.rows());
  parallel_for(xs.rows(), [&](std::int64_t i) {
    out(i) = density(spec, xs.row(i).transpose());
  });
  return out;
}

}  // namespace flowvar
