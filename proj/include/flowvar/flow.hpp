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

namespace flowvar {

enum class Direction { kForward, kBackward };

// States at the step boundaries k/n; times are strictly increasing from 0 to
// 1 (a backward run is stored reversed, states aligned with times).
// final_state is the integration result: the t=1 state going forward, the
// t=0 state going backward.
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  Eigen::VectorXd final_state;

  const Eigen::VectorXd& endpoint() const { return final_state; }
};

// Left-endpoint Euler: state times k/n, evaluation times k/n + t_offset.
// The default offset 1/(2n) keeps t = 1/2 off the evaluation set, which is
// what lets integration step across a field's singular time instead of
// landing on it; pass offset 0 to evaluate at the step boundaries
// themselves. Raises DivergenceError (with the step index) on non-finite
// states.
Trajectory euler_integrate(const BatchField& field, const Eigen::VectorXd& x0,
                           int steps, Direction direction = Direction::kForward,
                           std::optional<double> t_offset = std::nullopt);

// Lockstep batch integration; rows are independent. Returns the n x d
// endpoint matrix.
Eigen::MatrixXd integrate_endpoints(const BatchField& field,
                                    const Eigen::MatrixXd& x0, int steps,
                                    std::optional<double> t_offset =
                                        std::nullopt);

// Writes (row, t, c0, c1, ...) rows for a set of trajectories.
void write_trajectories(const std::filesystem::path& path,
                        const std::vector<Trajectory>& trajectories);

struct ReflowState {
  int iteration = 0;
  CouplingBatch coupling;
};

// Trains a fresh field on the given coupling and returns its evaluator plus
// a provenance label.
struct TrainedField {
  BatchField field;
  std::string label;
};
using TrainerFn = std::function<TrainedField(const CouplingBatch&)>;

// One rectification pass: fit a field to the current coupling, integrate
// every source point, and emit the regenerated coupling. x0 is carried over
// bit-identically.
ReflowState reflow_step(const ReflowState& state, const TrainerFn& trainer,
                        int steps,
                        std::optional<double> t_offset = std::nullopt);

struct StraightnessReport {
  // Mean over rows of the max deviation between the integrated path and the
  // coupling chord, sampled at the step boundaries.
  double path_deviation = 0.0;
  // kNN-binned estimate of the mean conditional displacement variance along
  // the chords; absent when the batch is smaller than the bin.
  std::optional<double> conditional_var;
};

StraightnessReport straightness(const CouplingBatch& batch,
                                const BatchField& field,
                                std::span<const double> t_grid,
                                int steps = 100, int knn = 16);

struct MemorizationScore {
  double mean_l2 = 0.0;
  double hit_fraction = 0.0;  // fraction of rows within epsilon
};

// Integrates every training source and reports the distance to its paired
// target; a "hit" lands within epsilon (default 0.1 for the 2-D unit-scale
// runs).
MemorizationScore memorization_score(const BatchField& field,
                                     const CouplingBatch& batch, int steps,
                                     double epsilon = 0.1,
                                     std::optional<double> t_offset =
                                         std::nullopt);

}  // namespace flowvar
