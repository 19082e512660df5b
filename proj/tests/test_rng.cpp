#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/rng.hpp"
#include "ergodic_bem/stats.hpp"

using namespace ergodic_bem;

TEST_CASE("block function matches the published output vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32(A4{0, 0, 0, 0}, A2{0, 0}) ==
        A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32(A4{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                   A2{0xffffffffu, 0xffffffffu}) ==
        A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  // pi-digit counter/key vector
  CHECK(philox4x32(A4{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                   A2{0xa4093822u, 0x299f31d0u}) ==
        A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("identical (seed, path) pairs reproduce bit-identical sequences") {
  GaussianStream a = derive_stream(42, 7);
  GaussianStream b = derive_stream(42, 7);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_normal() == b.next_normal());
  }
}

TEST_CASE("stream draws do not depend on other streams having been consumed") {
  GaussianStream other = derive_stream(42, 3);
  for (int i = 0; i < 123; ++i) other.next_normal();
  GaussianStream fresh = derive_stream(42, 5);
  GaussianStream again = derive_stream(42, 5);
  for (int i = 0; i < 200; ++i) CHECK(fresh.next_normal() == again.next_normal());
}

TEST_CASE("distinct path indices are uncorrelated") {
  const std::size_t n = 100000;
  GaussianStream a = derive_stream(2024, 0);
  GaussianStream b = derive_stream(2024, 1);
  KahanSum sum_ab, sum_a, sum_b, sum_aa, sum_bb;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.next_normal();
    const double y = b.next_normal();
    sum_ab.add(x * y);
    sum_a.add(x);
    sum_b.add(y);
    sum_aa.add(x * x);
    sum_bb.add(y * y);
  }
  const double nn = static_cast<double>(n);
  const double cov = sum_ab.value() / nn - (sum_a.value() / nn) * (sum_b.value() / nn);
  const double var_a = sum_aa.value() / nn - (sum_a.value() / nn) * (sum_a.value() / nn);
  const double var_b = sum_bb.value() / nn - (sum_b.value() / nn) * (sum_b.value() / nn);
  const double corr = cov / std::sqrt(var_a * var_b);
  CHECK(std::abs(corr) < 0.02);  // 3 sigma would be ~0.0095
}

TEST_CASE("increment variance matches the step size") {
  const std::size_t n = 1000000;
  GaussianStream s = derive_stream(7, 0);
  std::vector<double> dw(1);
  KahanSum sum, sum_sq;
  for (std::size_t i = 0; i < n; ++i) {
    sample_increment(s, 0.01, dw);
    sum.add(dw[0]);
    sum_sq.add(dw[0] * dw[0]);
  }
  const double nn = static_cast<double>(n);
  const double mean = sum.value() / nn;
  const double var = sum_sq.value() / nn - mean * mean;
  CHECK(var == doctest::Approx(0.01).epsilon(0.01));
}

TEST_CASE("zero step size gives the zero increment") {
  GaussianStream s = derive_stream(1, 1);
  std::vector<double> dw(3, 99.0);
  sample_increment(s, 0.0, dw);
  for (double v : dw) CHECK(v == 0.0);
}

TEST_CASE("mean and fourth moment of unit-step increments") {
  const std::size_t n = 1000000;
  GaussianStream s = derive_stream(99, 4);
  KahanSum sum, sum4;
  std::vector<double> dw(1);
  for (std::size_t i = 0; i < n; ++i) {
    sample_increment(s, 1.0, dw);
    sum.add(dw[0]);
    const double sq = dw[0] * dw[0];
    sum4.add(sq * sq);
  }
  const double nn = static_cast<double>(n);
  CHECK(std::abs(sum.value() / nn) < 0.004);       // 3 sigma = 0.003 plus margin
  CHECK(std::abs(sum4.value() / nn - 3.0) < 0.05); // Gaussian kurtosis
}

TEST_CASE("scaled increments pass a KS test against the standard normal") {
  const std::size_t n = 100000;
  GaussianStream s = derive_stream(123, 9);
  std::vector<double> samples(n);
  std::vector<double> dw(1);
  const double tau = 0.25;
  for (std::size_t i = 0; i < n; ++i) {
    sample_increment(s, tau, dw);
    samples[i] = dw[0] / std::sqrt(tau);
  }
  const KsReport ks = ks_to_normal(samples, 1.0);
  CHECK(ks.statistic < 0.006);  // 99% Kolmogorov quantile 1.63/sqrt(n) plus margin
}

TEST_CASE("aggregation: ratio 1 is the identity") {
  const std::vector<double> fine{0.5, -1.0, 2.0, 0.25};
  CHECK(aggregate_increments(fine, 1) == fine);
}

TEST_CASE("aggregation sums consecutive groups") {
  const std::vector<double> fine{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> coarse = aggregate_increments(fine, 2);
  REQUIRE(coarse.size() == 2);
  CHECK(coarse[0] == 3.0);
  CHECK(coarse[1] == 7.0);
}

TEST_CASE("aggregation preserves variance additivity") {
  const std::size_t n_coarse = 100000;
  const std::size_t ratio = 10;
  GaussianStream s = derive_stream(55, 0);
  std::vector<double> fine(n_coarse * ratio);
  std::vector<double> dw(1);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    sample_increment(s, 0.001, dw);
    fine[i] = dw[0];
  }
  const std::vector<double> coarse = aggregate_increments(fine, ratio);
  KahanSum sum, sum_sq;
  for (double v : coarse) {
    sum.add(v);
    sum_sq.add(v * v);
  }
  const double nn = static_cast<double>(n_coarse);
  const double mean = sum.value() / nn;
  const double var = sum_sq.value() / nn - mean * mean;
  CHECK(var == doctest::Approx(0.01).epsilon(0.02));
}

TEST_CASE("aggregation rejects non-divisible lengths") {
  const std::vector<double> fine{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(aggregate_increments(fine, 2), ConfigError);
}

TEST_CASE("multi-dimensional increments scale each component") {
  GaussianStream s = derive_stream(3, 3);
  const std::size_t n = 200000;
  KahanSum v0, v1;
  std::vector<double> dw(2);
  for (std::size_t i = 0; i < n; ++i) {
    sample_increment(s, 4.0, dw);
    v0.add(dw[0] * dw[0]);
    v1.add(dw[1] * dw[1]);
  }
  CHECK(v0.value() / static_cast<double>(n) == doctest::Approx(4.0).epsilon(0.02));
  CHECK(v1.value() / static_cast<double>(n) == doctest::Approx(4.0).epsilon(0.02));
}
