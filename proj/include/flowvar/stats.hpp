#pragma once

#include <span>
#include <utility>

#include "flowvar/rng.hpp"

namespace flowvar {

// Unbiased sample variance (ddof = 1).
double sample_variance(std::span<const double> xs);

double sample_mean(std::span<const double> xs);

// Type-7 (linear interpolation) quantile of a copy of xs.
double quantile(std::span<const double> xs, double q);

// Percentile bootstrap of the sample-variance statistic. Requires >= 2
// samples; constant input collapses to (0, 0).
std::pair<double, double> bootstrap_ci(std::span<const double> samples,
                                       double level, int resamples, Rng& rng);

// Spearman rank correlation (average ranks on ties).
double spearman_rho(std::span<const double> a, std::span<const double> b);

// CDF of Student's t with `dof` degrees of freedom, via the regularized
// incomplete beta function.
double student_t_cdf(double t, double dof);

// One-sided paired t-test p-value for mean(a - b) > 0.
double paired_t_p_greater(std::span<const double> a,
                          std::span<const double> b);

}  // namespace flowvar
