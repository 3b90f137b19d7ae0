#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowvar/coupling.hpp"
#include "flowvar/fields.hpp"
#include "flowvar/stats.hpp"

namespace flowvar {

// Monte-Carlo flow-matching loss over one batch at fixed (or per-row) time,
// with exact gradients: chain rule through the linear solve for the
// closed-form field, backprop for the MLP.
struct LossSample {
  double loss = 0.0;
  // Closed-form field gradients.
  Eigen::VectorXd grad_theta;
  Eigen::MatrixXd grad_Theta;
  // MLP: flattened parameter gradient.
  Eigen::VectorXd grad_flat;
};

LossSample mc_loss(const ClosedFormField& field, const CouplingBatch& batch,
                   double t, const InterpolantSpec& interp, Rng& rng);
LossSample mc_loss(const ClosedFormField& field, const CouplingBatch& batch,
                   const Eigen::VectorXd& t, const InterpolantSpec& interp,
                   Rng& rng);
LossSample mc_loss(const MlpField& field, const CouplingBatch& batch, double t,
                   const InterpolantSpec& interp, Rng& rng);
LossSample mc_loss(const MlpField& field, const CouplingBatch& batch,
                   const Eigen::VectorXd& t, const InterpolantSpec& interp,
                   Rng& rng);

Eigen::VectorXd uniform_times(int n, Rng& rng);

struct VarianceRow {
  double t = 0.0;
  double variance = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::string reduction;
  int batch_size = 0;      // S
  int gradient_draws = 0;  // B
  std::string case_label;
};

struct VarianceReport {
  std::vector<VarianceRow> rows;

  void write_csv(const std::filesystem::path& path) const;
  // Rows with the given reduction, in grid order.
  std::vector<VarianceRow> select(const std::string& reduction) const;
};

using PairingFactory = std::function<CouplingBatch(int, Rng&)>;

PairingFactory gaussian_pairing_factory(const PairingKind& kind,
                                        const GaussianSpec& source,
                                        const GaussianSpec& target);

// For each grid time draws B independent size-S batches, computes the batch
// loss gradient for each, and reports per-time variance statistics:
//   ones-*  Var over draws of the ones-contracted gradient (1^T g, and
//           1^T G 1 for the matrix parameter),
//   trace-* trace of the empirical covariance of the gradient across draws.
// Closed-form fields emit {ones,trace}-{theta,Theta}; MLPs emit
// {ones,trace}-all over the flattened parameters. 95% percentile-bootstrap
// bands over the draws, 100 resamples. Draws across (t, b) are parallel with
// per-draw derived streams; aggregation order is fixed.
VarianceReport grad_variance_empirical(const FieldVariant& field,
                                       const PairingFactory& factory,
                                       const InterpolantSpec& interp,
                                       std::span<const double> t_grid, int S,
                                       int B, Rng& rng,
                                       const std::string& case_label);

// Closed forms for the noiseless ones-contraction variances at the
// pair-optimal / transport-optimal parameters, normalized by the batch size
// n (per-sample values at n = 1). The quadratic-form variance for the matrix
// parameter uses tr(Q^2) + tr(Q Q^T); the Monte-Carlo estimator above is the
// oracle that pins these expressions.
enum class AnalyticCase {
  kOtAtOt,          // OT pairing, transport-optimal field: zero
  kRotAtOtTheta,    // rotated pairing under the OT field, translation grad
  kRotAtOtThetaMat, // rotated pairing under the OT field, matrix grad
  kRotAtRot,        // rotated pairing, its pair-optimal field: zero
  kRandomAtOt,      // independent pairing under the OT field, translation
};

AnalyticCase parse_analytic_case(const std::string& name);
std::string analytic_case_name(AnalyticCase c);

double analytic_variance(AnalyticCase c, const GaussianSpec& target,
                         const std::optional<RotationSpec>& rot, double t,
                         int n);

}  // namespace flowvar
