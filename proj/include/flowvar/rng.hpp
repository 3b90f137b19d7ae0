#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace flowvar {

// splitmix64; used for seeding and for deriving child streams.
std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256++ with explicit 64-bit seeding. All randomness in the project
// flows through this type; results are identical across platforms.
//
// Stream splitting: a parent generator owns a seed; child(k) yields an
// independent stream derived from (seed, k) via splitmix64. Parallel workers
// each own one child and never share it.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

  // Standard normal via Box-Muller. Each call consumes two uniforms and
  // discards the sine branch, so consumption is call-count predictable.
  double normal();

  // Fills k normals pairwise (cos and sin branch); no state is carried
  // between calls.
  void fill_normal(double* out, std::size_t k);

  Rng child(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
};

}  // namespace flowvar
