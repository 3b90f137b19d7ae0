#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "flowvar/coupling.hpp"
#include "flowvar/fields.hpp"
#include "flowvar/variance.hpp"

namespace flowvar {

enum class Optimizer { kAdam, kSgd };

// How interpolation times are drawn during training:
//   kUniform    fresh t ~ U(0,1) per example per step;
//   kPairTimes  a fixed set of m times per pair, drawn once from the seed
//               (the finite doubly-indexed dataset regime);
//   kSharedGrid every step averages the loss over the default interior grid
//               (deterministic full gradient; used to polish closed-form
//               fields to machine precision).
enum class TimeSampling { kUniform, kPairTimes, kSharedGrid };

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 128;
  int max_steps = 50000;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::optional<double> grad_clip;  // global-norm clip
  TimeSampling time_sampling = TimeSampling::kUniform;
  int times_per_pair = 8;  // kPairTimes
  int log_every = 1000;
  // Optional early stop: relative loss improvement below plateau_eps over
  // plateau_window steps.
  std::optional<double> plateau_eps;
  int plateau_window = 2000;

  void validate() const;
};

struct TraceRow {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  double final_loss = 0.0;
  long steps_run = 0;

  void write_csv(const std::filesystem::path& path) const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
};

// Standard Adam update with bias correction; moments decay even on zero
// gradients.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& state, const TrainConfig& config);

// Minimizes the Monte-Carlo flow-matching loss on a fixed coupling by
// seeded stochastic gradient steps. Deterministic given (config, data).
// NaN loss raises DivergenceError with the trace attached to the message.
TrainTrace train_field(MlpField& field, const CouplingBatch& data,
                       const TrainConfig& config);
TrainTrace train_field(ClosedFormField& field, const CouplingBatch& data,
                       const TrainConfig& config);

// Fresh batch per step from the factory (the infinite-data regime).
TrainTrace train_field(MlpField& field, const PairingFactory& factory,
                       const TrainConfig& config);
TrainTrace train_field(ClosedFormField& field, const PairingFactory& factory,
                       const TrainConfig& config);

// Seeded 80/20 index split; returns (train indices, heldout indices).
std::pair<std::vector<int>, std::vector<int>> train_test_split(
    int n, double train_fraction, Rng& rng);

}  // namespace flowvar
