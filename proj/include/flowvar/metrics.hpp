#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowvar/coupling.hpp"
#include "flowvar/fields.hpp"
#include "flowvar/gauss.hpp"

namespace flowvar {

// Median pairwise Euclidean distance over the pooled rows of x and y; the
// default kernel bandwidth.
double median_pairwise_distance(const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& y);

// Unbiased U-statistic estimator of squared MMD with kernel
// exp(-||a-b||^2 / (2 h^2)). May be slightly negative under the null.
// Requires n, m >= 2.
double mmd_gaussian(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    double bandwidth);

struct SinkhornResult {
  double cost = 0.0;  // transport cost <P, C> of the entropic plan
  int iterations = 0;
  bool converged = false;
  double marginal_violation = 0.0;
};

// Entropic OT between uniform empirical measures with squared-Euclidean
// cost, log-domain iterations. Convergence: L1 row-marginal violation below
// tol. Non-convergence is reported in the result, not thrown.
SinkhornResult sinkhorn(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        double epsilon, int max_iters = 1000,
                        double tol = 1e-6);

struct MetricReport {
  std::string quadrant;  // Gen | Mem | True | Data
  double logprob = 0.0;
  double mmd = 0.0;      // clamped at 0
  double mmd_raw = 0.0;  // estimator value before clamping
  double sinkhorn = 0.0;
  double mmd_bandwidth = 0.0;
  double sinkhorn_epsilon = 0.0;
  bool sinkhorn_converged = true;
  int n = 0;
  std::uint64_t seed = 0;
};

struct QuadrantConfig {
  int steps = 100;
  std::optional<double> t_offset;
  double sinkhorn_epsilon = 1e-3;
  int sinkhorn_max_iters = 2000;
  double sinkhorn_tol = 1e-6;
};

// The four-way comparison:
//   Gen  integrate(heldout x0)  vs fresh true samples
//   Mem  integrate(train x0)    vs the paired training targets
//   True two independent true draws
//   Data training targets       vs fresh true samples
// logprob is the mean target-mixture log-likelihood of the first set.
std::array<MetricReport, 4> eval_quadrant(const BatchField& field,
                                          const CouplingBatch& train,
                                          const Eigen::MatrixXd& heldout_x0,
                                          const GmmSpec& target, int n,
                                          std::uint64_t seed,
                                          const QuadrantConfig& config);

void append_metric_csv_rows(class CsvWriter& writer, const std::string& model,
                            double sigma, int dim,
                            const std::array<MetricReport, 4>& reports);

std::vector<std::string> metric_csv_header();

}  // namespace flowvar
