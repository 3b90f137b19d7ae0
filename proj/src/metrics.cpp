#include "flowvar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "flowvar/errors.hpp"
#include "flowvar/flow.hpp"
#include "flowvar/io.hpp"
#include "flowvar/parallel.hpp"

namespace flowvar {

double median_pairwise_distance(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) {
    throw ShapeError("median_pairwise_distance: dimension mismatch");
  }
  Eigen::MatrixXd pooled(x.rows() + y.rows(), x.cols());
  pooled.topRows(x.rows()) = x;
  pooled.bottomRows(y.rows()) = y;
  const Eigen::Index n = pooled.rows();
  if (n < 2) {
    throw DomainError("median_pairwise_distance: need at least 2 points");
  }
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                   dists.end());
  return dists[dists.size() / 2];
}

namespace {

// Deterministic argument order so mmd(x, y) == mmd(y, x) bitwise.
bool mmd_swap_order(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() != y.rows()) return x.rows() > y.rows();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = x.data()[i];
    const double b = y.data()[i];
    if (a != b) return a > b;
  }
  return false;
}

}  // namespace

double mmd_gaussian(const Eigen::MatrixXd& x_in, const Eigen::MatrixXd& y_in,
                    double bandwidth) {
  if (x_in.cols() != y_in.cols()) {
    throw ShapeError("mmd_gaussian: dimension mismatch");
  }
  const bool swap = mmd_swap_order(x_in, y_in);
  const Eigen::MatrixXd& x = swap ? y_in : x_in;
  const Eigen::MatrixXd& y = swap ? x_in : y_in;
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  if (n < 2 || m < 2) {
    throw DomainError("mmd_gaussian: need n, m >= 2");
  }
  if (bandwidth <= 0.0) {
    throw DomainError("mmd_gaussian: bandwidth must be > 0");
  }
  const double inv = -1.0 / (2.0 * bandwidth * bandwidth);

  // Per-row partial sums; rows are reduced in index order afterwards.
  Eigen::VectorXd xx_rows = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd yy_rows = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd xy_rows = Eigen::VectorXd::Zero(n);
  parallel_for(n, [&](std::int64_t i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      acc += std::exp(inv * (x.row(i) - x.row(j)).squaredNorm());
    }
    xx_rows(i) = acc;
    double cross = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      cross += std::exp(inv * (x.row(i) - y.row(j)).squaredNorm());
    }
    xy_rows(i) = cross;
  });
  parallel_for(m, [&](std::int64_t i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      acc += std::exp(inv * (y.row(i) - y.row(j)).squaredNorm());
    }
    yy_rows(i) = acc;
  });

  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) xx += xx_rows(i);
  for (Eigen::Index i = 0; i < m; ++i) yy += yy_rows(i);
  for (Eigen::Index i = 0; i < n; ++i) xy += xy_rows(i);
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return xx / (nd * (nd - 1.0)) + yy / (md * (md - 1.0)) -
         2.0 * xy / (nd * md);
}

namespace {

// log sum_j exp(v_j + w_j), max-stabilized.
double lse(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

SinkhornResult sinkhorn(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        double epsilon, int max_iters, double tol) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  if (n < 1 || m < 1) {
    throw DomainError("sinkhorn: need n, m >= 1");
  }
  if (x.cols() != y.cols()) {
    throw ShapeError("sinkhorn: dimension mismatch");
  }
  if (epsilon <= 0.0) {
    throw DomainError("sinkhorn: epsilon must be > 0");
  }

  Eigen::MatrixXd cost(n, m);
  parallel_for(n, [&](std::int64_t i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      cost(i, j) = (x.row(i) - y.row(j)).squaredNorm();
    }
  });

  const double log_mu = -std::log(static_cast<double>(n));
  const double log_nu = -std::log(static_cast<double>(m));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);

  auto sweep = [&](double eps) {
    parallel_for(n, [&](std::int64_t i) {
      const Eigen::VectorXd terms =
          ((g.transpose() - cost.row(i)) / eps).array() + log_nu;
      f(i) = -eps * lse(terms);
    });
    parallel_for(m, [&](std::int64_t j) {
      const Eigen::VectorXd terms = ((f - cost.col(j)) / eps).array() + log_mu;
      g(j) = -eps * lse(terms);
    });
  };

  // Epsilon-scaling warm start: anneal the regularization down to the target
  // and let the dual potentials carry over; cuts iteration counts at small
  // epsilon by orders of magnitude.
  const double max_cost = cost.maxCoeff();
  if (max_cost > 0.0) {
    double eps_anneal = max_cost / 2.0;
    while (eps_anneal > epsilon) {
      for (int k = 0; k < 4; ++k) sweep(eps_anneal);
      eps_anneal *= 0.5;
    }
  }

  SinkhornResult result;
  double violation = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    // f-update makes the row marginals exact, g-update the columns.
    sweep(epsilon);
    // Row-marginal L1 violation (columns are exact after the g-update).
    Eigen::VectorXd row_mass(n);
    parallel_for(n, [&](std::int64_t i) {
      const Eigen::VectorXd log_p =
          ((f(i) + g.transpose().array() - cost.row(i).array()) / epsilon +
           log_mu + log_nu)
              .matrix();
      row_mass(i) = std::exp(lse(log_p));
    });
    violation = 0.0;
    const double mu = std::exp(log_mu);
    for (Eigen::Index i = 0; i < n; ++i) {
      violation += std::abs(row_mass(i) - mu);
    }
    if (violation < tol) {
      result.converged = true;
      ++iter;
      break;
    }
  }
  result.iterations = iter;
  result.marginal_violation = violation;

  // Transport cost <P, C> accumulated in fixed row order.
  Eigen::VectorXd row_cost(n);
  parallel_for(n, [&](std::int64_t i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double log_p =
          (f(i) + g(j) - cost(i, j)) / epsilon + log_mu + log_nu;
      acc += std::exp(log_p) * cost(i, j);
    }
    row_cost(i) = acc;
  });
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += row_cost(i);
  result.cost = total;
  return result;
}

namespace {

MetricReport make_report(const std::string& quadrant,
                         const Eigen::MatrixXd& lhs,
                         const Eigen::MatrixXd& rhs, const GmmSpec& target,
                         std::uint64_t seed, const QuadrantConfig& config) {
  MetricReport report;
  report.quadrant = quadrant;
  report.seed = seed;
  report.n = static_cast<int>(lhs.rows());
  report.logprob = gmm_log_prob_batch(target, lhs).mean();
  report.mmd_bandwidth = median_pairwise_distance(lhs, rhs);
  report.mmd_raw = mmd_gaussian(lhs, rhs, report.mmd_bandwidth);
  report.mmd = std::max(0.0, report.mmd_raw);
  const SinkhornResult sk =
      sinkhorn(lhs, rhs, config.sinkhorn_epsilon, config.sinkhorn_max_iters,
               config.sinkhorn_tol);
  report.sinkhorn = sk.cost;
  report.sinkhorn_converged = sk.converged;
  report.sinkhorn_epsilon = config.sinkhorn_epsilon;
  return report;
}

}  // namespace

std::array<MetricReport, 4> eval_quadrant(const BatchField& field,
                                          const CouplingBatch& train,
                                          const Eigen::MatrixXd& heldout_x0,
                                          const GmmSpec& target, int n,
                                          std::uint64_t seed,
                                          const QuadrantConfig& config) {
  train.validate();
  target.validate();
  if (heldout_x0.cols() != train.dim()) {
    throw ShapeError("eval_quadrant: heldout dimension mismatch");
  }
  Rng rng(seed);
  Rng true_rng_a = rng.child(1);
  Rng true_rng_b = rng.child(2);
  const Eigen::MatrixXd true_a = sample_gmm(target, n, true_rng_a);
  const Eigen::MatrixXd true_b = sample_gmm(target, n, true_rng_b);

  const Eigen::MatrixXd gen_heldout =
      integrate_endpoints(field, heldout_x0, config.steps, config.t_offset);
  const Eigen::MatrixXd gen_train =
      integrate_endpoints(field, train.x0, config.steps, config.t_offset);

  return {make_report("Gen", gen_heldout, true_a, target, seed, config),
          make_report("Mem", gen_train, train.x1, target, seed, config),
          make_report("True", true_a, true_b, target, seed, config),
          make_report("Data", train.x1, true_a, target, seed, config)};
}

std::vector<std::string> metric_csv_header() {
  return {"model", "sigma", "dim", "quadrant", "metric", "value", "n", "seed"};
}

void append_metric_csv_rows(CsvWriter& writer, const std::string& model,
                            double sigma, int dim,
                            const std::array<MetricReport, 4>& reports) {
  for (const auto& report : reports) {
    const std::array<std::pair<std::string, double>, 3> metrics = {{
        {"logprob", report.logprob},
        {"mmd", report.mmd},
        {"sinkhorn", report.sinkhorn},
    }};
    for (const auto& [name, value] : metrics) {
      writer.field(model)
          .field(sigma)
          .field(static_cast<std::int64_t>(dim))
          .field(report.quadrant)
          .field(name)
          .field(value)
          .field(static_cast<std::int64_t>(report.n))
          .field(static_cast<std::int64_t>(report.seed));
      writer.end_row();
    }
  }
}

}  // namespace flowvar
