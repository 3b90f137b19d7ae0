#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "flowvar/coupling.hpp"
#include "flowvar/gauss.hpp"
#include "flowvar/mlp.hpp"

namespace flowvar {

inline constexpr double kSingularTol = 1e-10;

// Batch evaluation closure shared by the integrator, trainers and metrics:
// rows of x are states, t is the shared time.
using BatchField =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, double)>;

// Linear-rational field v(x, t) = theta + Theta (I + t Theta)^{-1}(x - t
// theta). The rational time dependence cannot be matched exactly by a
// feedforward net, which is why this parameterization exists as its own
// field type. For integration, v is Lipschitz in x with linear growth on any
// interval where (I + t Theta) stays invertible, so ODE solutions from any
// start are unique there.
struct ClosedFormField {
  Eigen::MatrixXd Theta;
  Eigen::VectorXd theta;

  int dim() const { return static_cast<int>(theta.size()); }
};

// Factorization of (I + t Theta) at fixed t. Construction throws
// SingularityError when the smallest singular value is below kSingularTol.
struct CfTimeOp {
  double t = 0.0;
  Eigen::MatrixXd c;  // (I + t Theta)^{-1}
  double smallest_singular_value = 0.0;
};

CfTimeOp cf_time_op(const ClosedFormField& field, double t);

Eigen::VectorXd cf_eval(const ClosedFormField& field, const Eigen::VectorXd& x,
                        double t);
Eigen::MatrixXd cf_eval_batch(const ClosedFormField& field,
                              const Eigen::MatrixXd& x, double t);

// Raises SingularityError naming the first grid time where (I + t Theta) is
// numerically singular.
void cf_check_grid(const ClosedFormField& field, std::span<const double> grid);

// Default interior evaluation grid {0.05, 0.10, ..., 0.95}.
std::vector<double> default_t_grid();

// Theta = sqrt_pd(M) - I, theta = mu: the pair-optimal parameters for the
// pushforward x -> sqrt_pd(M) x + mu.
ClosedFormField cf_optimal_params(const GaussianSpec& target);

// Theta = sqrt_pd(M) R - I, theta = mu. Scans the default grid and raises
// SingularityError for degenerate rotations (the 180-degree case).
ClosedFormField cf_rot_params(const GaussianSpec& target,
                              const RotationSpec& rot);

// Lookup field storing {(z_t, t) -> z1 - z0} tuples. Evaluation returns the
// displacement of the nearest stored key in (z_t, t) space; keys within
// match_tol of each other must agree on their displacement (checked at
// build). On the stored tuples the empirical flow-matching loss is exactly
// zero; off the keys the nearest-neighbor fallback is an explicit policy
// choice, not a guarantee.
class MemorizingField {
 public:
  MemorizingField(Eigen::MatrixXd keys, Eigen::MatrixXd displacements,
                  double match_tol);
  MemorizingField(const MemorizingField&);
  MemorizingField(MemorizingField&&) noexcept;
  MemorizingField& operator=(MemorizingField);
  ~MemorizingField();

  Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const;
  Eigen::MatrixXd eval_batch(const Eigen::MatrixXd& x, double t) const;

  const Eigen::MatrixXd& keys() const { return keys_; }
  const Eigen::MatrixXd& displacements() const { return displacements_; }
  double match_tol() const { return match_tol_; }
  int dim() const { return static_cast<int>(displacements_.cols()); }

 private:
  Eigen::MatrixXd keys_;           // K x (d+1), columns [z_t, t]
  Eigen::MatrixXd displacements_;  // K x d
  double match_tol_;
  struct Index;
  std::unique_ptr<Index> index_;
};

// Stores m tuples per pair at the given times (n x m, values in [0, 1]).
MemorizingField build_memorizing_field(const CouplingBatch& batch,
                                       const Eigen::MatrixXd& times,
                                       double match_tol);

// Times drawn uniformly, m per pair.
MemorizingField build_memorizing_field(const CouplingBatch& batch, int m,
                                       double match_tol, Rng& rng);

using FieldVariant = std::variant<ClosedFormField, MlpField, MemorizingField>;

BatchField batch_field(const ClosedFormField& field);
BatchField batch_field(const MlpField& field);
BatchField batch_field(const MemorizingField& field);
BatchField batch_field(const FieldVariant& field);

// Versioned JSON round trip (layer shapes and row-major arrays).
void save_field(const std::filesystem::path& path, const FieldVariant& field);
FieldVariant load_field(const std::filesystem::path& path);

}  // namespace flowvar
