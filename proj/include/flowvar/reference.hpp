#pragma once

#include <Eigen/Dense>

#include "flowvar/fields.hpp"
#include "flowvar/gauss.hpp"
#include "flowvar/metrics.hpp"

// Straight-line serial implementations of the parallel kernels. Tests check
// the OpenMP paths against these; the benchmark target times the two side by
// side.
namespace flowvar::reference {

double mmd_gaussian(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    double bandwidth);

SinkhornResult sinkhorn(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        double epsilon, int max_iters = 1000,
                        double tol = 1e-6);

Eigen::MatrixXd integrate_endpoints(const BatchField& field,
                                    const Eigen::MatrixXd& x0, int steps,
                                    double t_offset);

Eigen::VectorXd gmm_log_prob_batch(const GmmSpec& spec,
                                   const Eigen::MatrixXd& xs);

}  // namespace flowvar::reference
