#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace ergodic_bem {

// Counter-based Gaussian stream. A (master_seed, path_index) pair addresses an
// independent, non-overlapping stream; every draw is a pure function of
// (seed, path, draw counter). There is no jump-ahead state, so any path can be
// generated on any worker, in any order, with bit-identical results.
//
// Uniform blocks come from Philox4x32-10; normals from the Box-Muller transform.
// Both are fixed for this build: changing either changes every sequence.
class GaussianStream {
public:
  GaussianStream(std::uint64_t master_seed, std::uint64_t path_index);

  // One standard normal draw.
  double next_normal();

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t path_index() const { return path_index_; }

private:
  double next_u01();  // uniform strictly inside (0,1)
  void refill();

  std::uint64_t master_seed_ = 0;
  std::uint64_t path_index_ = 0;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

GaussianStream derive_stream(std::uint64_t master_seed, std::uint64_t path_index);

// The underlying counter-based block function (10-round Philox4x32). Exposed
// so tests can pin the generator to its published output vectors.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Fills out with a Brownian increment over a step of length tau: sqrt(tau) * z,
// z standard normal in R^D. tau == 0 yields the zero vector.
void sample_increment(GaussianStream& stream, double tau, std::span<double> out);

std::vector<double> sample_increment(GaussianStream& stream, double tau, std::size_t noise_dim);

// Sums consecutive groups of `ratio` fine increments into coarse increments
// (flattened layout, noise_dim components per increment). This is exact Brownian
// consistency: coarse and fine paths share one underlying Brownian motion.
// Throws ConfigError if the sequence length is not divisible by ratio.
std::vector<double> aggregate_increments(std::span<const double> fine, std::size_t ratio,
                                         std::size_t noise_dim = 1);

}  // namespace ergodic_bem
