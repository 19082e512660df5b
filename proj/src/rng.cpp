#include "ergodic_bem/rng.hpp"

#include <cmath>
#include <numbers>

#include "ergodic_bem/common.hpp"

namespace ergodic_bem {

namespace {

// Philox4x32-10 round constants (Salmon et al. counter-based generator).
constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double u64_to_unit(std::uint64_t v) {
  // 53 mantissa bits, offset half an ulp so the result is strictly inside (0,1).
  return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, counter[0], hi0, lo0);
    mulhilo(kPhiloxM1, counter[2], hi1, lo1);
    counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return counter;
}

GaussianStream::GaussianStream(std::uint64_t master_seed, std::uint64_t path_index)
    : master_seed_(master_seed),
      path_index_(path_index),
      key_{static_cast<std::uint32_t>(master_seed),
           static_cast<std::uint32_t>(master_seed >> 32)} {}

void GaussianStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(path_index_), static_cast<std::uint32_t>(path_index_ >> 32),
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32)};
  buf_ = philox4x32(ctr, key_);
  ++block_;
  buf_pos_ = 0;
}

double GaussianStream::next_u01() {
  if (buf_pos_ >= 4) refill();
  const std::uint64_t lo = buf_[static_cast<std::size_t>(buf_pos_)];
  const std::uint64_t hi = buf_[static_cast<std::size_t>(buf_pos_) + 1];
  buf_pos_ += 2;
  return u64_to_unit(lo | (hi << 32));
}

double GaussianStream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_u01();
  const double u2 = next_u01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

GaussianStream derive_stream(std::uint64_t master_seed, std::uint64_t path_index) {
  return GaussianStream(master_seed, path_index);
}

void sample_increment(GaussianStream& stream, double tau, std::span<double> out) {
  if (tau < 0.0) throw ConfigError("step size must be nonnegative");
  if (tau == 0.0) {
    for (double& v : out) v = 0.0;
    return;
  }
  const double scale = std::sqrt(tau);
  for (double& v : out) v = scale * stream.next_normal();
}

std::vector<double> sample_increment(GaussianStream& stream, double tau, std::size_t noise_dim) {
  std::vector<double> out(noise_dim);
  sample_increment(stream, tau, out);
  return out;
}

std::vector<double> aggregate_increments(std::span<const double> fine, std::size_t ratio,
                                         std::size_t noise_dim) {
  if (ratio == 0) throw ConfigError("aggregation ratio must be positive");
  if (noise_dim == 0) throw ConfigError("noise dimension must be positive");
  if (fine.size() % noise_dim != 0) {
    throw ConfigError("increment sequence length is not a multiple of the noise dimension");
  }
  const std::size_t n_fine = fine.size() / noise_dim;
  if (n_fine % ratio != 0) {
    throw ConfigError("increment count " + std::to_string(n_fine) +
                      " is not divisible by aggregation ratio " + std::to_string(ratio));
  }
  const std::size_t n_coarse = n_fine / ratio;
  std::vector<double> coarse(n_coarse * noise_dim, 0.0);
  for (std::size_t k = 0; k < n_coarse; ++k) {
    for (std::size_t i = 0; i < ratio; ++i) {
      const std::size_t src = (k * ratio + i) * noise_dim;
      for (std::size_t j = 0; j < noise_dim; ++j) coarse[k * noise_dim + j] += fine[src + j];
    }
  }
  return coarse;
}

}  // namespace ergodic_bem
