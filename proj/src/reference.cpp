#include "flowvar/reference.hpp"

#include <cmath>
#include <limits>

#include "flowvar/errors.hpp"

namespace flowvar::reference {

double mmd_gaussian(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    double bandwidth) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  const double inv = -1.0 / (2.0 * bandwidth * bandwidth);
  double xx = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      xx += std::exp(inv * (x.row(i) - x.row(j)).squaredNorm());
    }
  }
  double yy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      yy += std::exp(inv * (y.row(i) - y.row(j)).squaredNorm());
    }
  }
  double xy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      xy += std::exp(inv * (x.row(i) - y.row(j)).squaredNorm());
    }
  }
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return xx / (nd * (nd - 1.0)) + yy / (md * (md - 1.0)) -
         2.0 * xy / (nd * md);
}

namespace {

double lse_row(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    acc += std::exp(v(i) - mx);
  }
  return mx + std::log(acc);
}

}  // namespace

SinkhornResult sinkhorn(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        double epsilon, int max_iters, double tol) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  Eigen::MatrixXd cost(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    }
  }
  const double log_mu = -std::log(static_cast<double>(n));
  const double log_nu = -std::log(static_cast<double>(m));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  SinkhornResult result;
  double violation = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd terms =
          ((g.transpose() - cost.row(i)) / epsilon).array() + log_nu;
      f(i) = -epsilon * lse_row(terms);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd terms =
          ((f - cost.col(j)) / epsilon).array() + log_mu;
      g(j) = -epsilon * lse_row(terms);
    }
    violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd log_p =
          ((f(i) + g.transpose().array() - cost.row(i).array()) / epsilon +
           log_mu + log_nu)
              .matrix();
      violation += std::abs(std::exp(lse_row(log_p)) - std::exp(log_mu));
    }
    if (violation < tol) {
      result.converged = true;
      ++iter;
      break;
    }
  }
  result.iterations = iter;
  result.marginal_violation = violation;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double log_p =
          (f(i) + g(j) - cost(i, j)) / epsilon + log_mu + log_nu;
      total += std::exp(log_p) * cost(i, j);
    }
  }
  result.cost = total;
  return result;
}

Eigen::MatrixXd integrate_endpoints(const BatchField& field,
                                    const Eigen::MatrixXd& x0, int steps,
                                    double t_offset) {
  const double h = 1.0 / static_cast<double>(steps);
  Eigen::MatrixXd out(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    Eigen::MatrixXd x = x0.row(i);
    for (int k = 0; k < steps; ++k) {
      x += h * field(x, h * k + t_offset);
    }
    out.row(i) = x;
  }
  return out;
}

Eigen::VectorXd gmm_log_prob_batch(const GmmSpec& spec,
                                   const Eigen::MatrixXd& xs) {
  Eigen::VectorXd out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out(i) = flowvar::gmm_log_prob(spec, xs.row(i).transpose());
  }
  return out;
}

}  // namespace flowvar::reference
