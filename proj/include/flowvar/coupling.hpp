#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "flowvar/gauss.hpp"
#include "flowvar/rng.hpp"

namespace flowvar {

enum class PairingType { kOt, kRot, kRandom, kShuffled, kGenerated };

// Which map produced x1 from x0. Rotated pairings carry their rotation;
// shuffled ones the permutation seed; generated ones a provenance label
// naming the field that integrated them.
struct PairingKind {
  PairingType type = PairingType::kOt;
  std::optional<RotationSpec> rotation;
  std::optional<std::uint64_t> shuffle_seed;
  std::string provenance;

  static PairingKind ot() { return {PairingType::kOt, {}, {}, ""}; }
  static PairingKind rot(RotationSpec r) {
    return {PairingType::kRot, r, {}, ""};
  }
  static PairingKind random() { return {PairingType::kRandom, {}, {}, ""}; }
  static PairingKind shuffled(std::uint64_t seed) {
    return {PairingType::kShuffled, {}, seed, ""};
  }
  static PairingKind generated(std::string from) {
    return {PairingType::kGenerated, {}, {}, std::move(from)};
  }

  std::string label() const;
};

struct CouplingBatch {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd x1;
  PairingKind kind;

  int n() const { return static_cast<int>(x0.rows()); }
  int dim() const { return static_cast<int>(x0.cols()); }
  void validate() const;
};

// Interpolant x_t = (1-t) x0 + t x1 + f(t, sigma) z with the fixed schedule
// f(t, sigma) = sigma * sqrt(t (1-t)). General (alpha_t, beta_t, gamma_t)
// schedules are an extension point, not implemented: every experiment here
// uses this pair.
struct InterpolantSpec {
  double sigma = 0.0;

  static double schedule(double t, double sigma) {
    return sigma * std::sqrt(t * (1.0 - t));
  }
  double noise_scale(double t) const { return schedule(t, sigma); }
  void validate() const;
};

// Builds a paired batch. OT: x1 = sqrt_pd(M) x0 + mu. ROT: x1 =
// sqrt_pd(M) R x0 + mu. RANDOM: x1 drawn from the target independently.
// SHUFFLED: an OT pairing whose targets are permuted by a seeded
// Fisher-Yates pass (seed recorded in the kind).
CouplingBatch make_pairing(const PairingKind& kind, const GaussianSpec& source,
                           const GaussianSpec& target, int n, Rng& rng);

// Rowwise x_t; sigma = 0 consumes no randomness. t outside [0,1] is a
// domain error.
Eigen::MatrixXd interpolate(const CouplingBatch& batch, double t,
                            const InterpolantSpec& spec, Rng& rng);

// x0.csv + x1.csv + coupling.json under dir.
void write_coupling(const std::filesystem::path& dir,
                    const CouplingBatch& batch);
CouplingBatch read_coupling(const std::filesystem::path& dir);

}  // namespace flowvar
