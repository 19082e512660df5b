#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/integrator.hpp"
#include "ergodic_bem/model.hpp"
#include "ergodic_bem/rng.hpp"
#include "ergodic_bem/stats.hpp"

using namespace ergodic_bem;

namespace {

// Independent root finder for the scalar implicit equation y - tau*b(y) = rhs.
// Monotone in y for dissipative b, so the root is bracketed and bisection is a
// valid oracle for the Newton path.
double bisect_implicit(const std::function<double(double)>& b, double tau, double rhs) {
  const double bound = std::abs(rhs) + 2.0;
  double lo = -bound, hi = bound;
  auto f = [&](double y) { return y - tau * b(y) - rhs; };
  REQUIRE(f(lo) < 0.0);
  REQUIRE(f(hi) > 0.0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

SdeModel pure_noise_model() {
  return make_scalar_model("pure-noise", [](double) { return 0.0; }, [](double) { return 0.0; },
                           [](double) { return 1.0; }, [](double) { return 0.0; }, 1);
}

}  // namespace

TEST_CASE("vanishing drift reduces the implicit step to the explicit update") {
  const SdeModel m = pure_noise_model();
  BemConfig cfg;
  cfg.tau = 0.3;
  const std::vector<double> x{0.3}, dw{0.2};
  const StepOutcome out = bem_step(m, cfg, x, dw);
  CHECK(out.state[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("linear drift solves in closed form") {
  const SdeModel ou = builtin_model("ou", 8.0, 1.0);
  BemConfig cfg;
  cfg.tau = 0.1;
  SUBCASE("no noise") {
    const std::vector<double> x{1.0}, dw{0.0};
    const StepOutcome out = bem_step(ou, cfg, x, dw);
    CHECK(out.state[0] == doctest::Approx(1.0 / 1.8).epsilon(1e-13));
  }
  SUBCASE("with noise") {
    const std::vector<double> x{-0.7}, dw{0.35};
    const StepOutcome out = bem_step(ou, cfg, x, dw);
    CHECK(out.state[0] == doctest::Approx((-0.7 + 0.35) / 1.8).epsilon(1e-13));
  }
}

TEST_CASE("cubic drift matches the bisection oracle at the worked example") {
  const SdeModel ex51 = builtin_model("example51");
  BemConfig cfg;
  cfg.tau = 0.1;
  // x = 1, dW = 0 gives rhs = 1: the root of 0.1 y^3 + 1.8 y - 1.
  const std::vector<double> x{1.0}, dw{0.0};
  const StepOutcome out = bem_step(ex51, cfg, x, dw);
  const double oracle =
      bisect_implicit([](double y) { return -(y * y * y + 8.0 * y); }, 0.1, 1.0);
  CHECK(std::abs(out.state[0] - oracle) < 1e-10);
  CHECK(out.residual_norm <= cfg.newton_tol * 2.0);
}

TEST_CASE("Newton agrees with bisection on random scalar steps") {
  const SdeModel ex51 = builtin_model("example51");
  GaussianStream s = derive_stream(31, 0);
  std::vector<double> dw(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double x = 3.0 * s.next_normal();
    const double tau = 0.5 * (0.002 + 0.998 * normal_cdf(s.next_normal()));
    sample_increment(s, tau, dw);
    BemConfig cfg;
    cfg.tau = tau;
    const std::vector<double> xv{x};
    const StepOutcome out = bem_step(ex51, cfg, xv, dw);
    const double rhs = x + std::sin(x) * dw[0];
    const double oracle =
        bisect_implicit([](double y) { return -(y * y * y + 8.0 * y); }, tau, rhs);
    CHECK(std::abs(out.state[0] - oracle) < 1e-10);
    // Accepted steps satisfy the residual contract.
    CHECK(out.residual_norm <= cfg.newton_tol * (1.0 + std::abs(x)));
  }
}

TEST_CASE("explicit Euler-Maruyama updates") {
  const SdeModel m = pure_noise_model();
  CHECK(em_step(m, 0.1, std::vector<double>{0.3}, std::vector<double>{0.2})[0] ==
        doctest::Approx(0.5));
  const SdeModel ou = builtin_model("ou", 8.0, 0.0);
  CHECK(em_step(ou, 0.1, std::vector<double>{1.0}, std::vector<double>{0.0})[0] ==
        doctest::Approx(0.2));
}

TEST_CASE("explicit stepping of a superlinear drift diverges at coarse steps") {
  // Deterministic blow-up: from x = 3 at tau = 0.5 the explicit update
  // overshoots and oscillates with growing amplitude regardless of the noise.
  const SdeModel ex51 = builtin_model("example51");
  GaussianStream s = derive_stream(5, 0);
  std::vector<double> x{3.0}, dw(1);
  double max_abs = 0.0;
  for (int k = 0; k < 50 && std::isfinite(x[0]); ++k) {
    sample_increment(s, 0.5, dw);
    x = em_step(ex51, 0.5, x, dw);
    max_abs = std::max(max_abs, std::abs(x[0]));
  }
  CHECK(max_abs > 1e6);
}

TEST_CASE("superlinear models refuse tau >= 1") {
  const SdeModel ex51 = builtin_model("example51");
  BemConfig cfg;
  cfg.tau = 1.0;
  CHECK_THROWS_AS(validate_step_setup(ex51, cfg), ConfigError);
  const SdeModel ou = builtin_model("ou");
  CHECK_NOTHROW(validate_step_setup(ou, cfg));
}

TEST_CASE("zero-step simulation yields only the initial state") {
  const SdeModel ou = builtin_model("ou");
  BemConfig cfg;
  cfg.tau = 0.1;
  GaussianStream s = derive_stream(1, 0);
  const auto traj = simulate_trajectory(ou, cfg, std::vector<double>{0.5}, 0, s);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0][0] == 0.5);
}

TEST_CASE("noise-free linear path follows the closed-form recursion") {
  const SdeModel ou = builtin_model("ou", 8.0, 0.0);
  BemConfig cfg;
  cfg.tau = 0.05;
  GaussianStream s = derive_stream(1, 0);
  const std::size_t n = 20;
  const auto traj = simulate_trajectory(ou, cfg, std::vector<double>{2.0}, n, s);
  double expect = 2.0;
  for (std::size_t k = 1; k <= n; ++k) {
    expect /= 1.4;  // 1 + theta*tau
    CHECK(traj[k][0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("second moments stay bounded along the dissipative path") {
  const SdeModel ex51 = builtin_model("example51");
  BemConfig cfg;
  cfg.tau = 0.01;
  const std::size_t n_steps = 10000, n_paths = 200;
  std::vector<double> sum_sq(n_steps + 1, 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    GaussianStream s = derive_stream(2024, p);
    simulate_path(ex51, cfg, std::vector<double>{1.0}, n_steps, s,
                  [&](std::size_t k, std::span<const double> x) { sum_sq[k] += x[0] * x[0]; });
  }
  double worst = 0.0;
  for (double v : sum_sq) worst = std::max(worst, v / static_cast<double>(n_paths));
  CHECK(worst < 1.2);
}

TEST_CASE("solver failures carry the step index") {
  // Anti-dissipative drift: once the state outgrows the fold of the implicit
  // map the local root vanishes and damped Newton must give up.
  SdeModel bad = make_scalar_model(
      "exploding", [](double x) { return x * x * x + 8.0 * x; },
      [](double x) { return 3.0 * x * x + 8.0; }, [](double) { return 0.5; },
      [](double) { return 0.0; }, 3);
  BemConfig cfg;
  cfg.tau = 0.01;
  GaussianStream s = derive_stream(3, 0);
  bool threw = false;
  try {
    simulate_path(bad, cfg, std::vector<double>{2.0}, 1000, s,
                  [](std::size_t, std::span<const double>) {});
  } catch (const SolverError& e) {
    threw = true;
    CHECK(e.last_residual > 0.0);
    CHECK(e.step_index > 0);
  }
  CHECK(threw);
}

TEST_CASE("coupled pairs: identical starts stay identical") {
  const SdeModel ex51 = builtin_model("example51");
  BemConfig cfg;
  cfg.tau = 0.02;
  GaussianStream s = derive_stream(4, 0);
  simulate_coupled_pair(ex51, cfg, std::vector<double>{1.5}, std::vector<double>{1.5}, 200, s,
                        [](std::size_t, std::span<const double> a, std::span<const double> b) {
                          CHECK(a[0] == b[0]);
                        });
}

TEST_CASE("coupled pairs: noise-free linear contraction is exact") {
  const SdeModel ou = builtin_model("ou", 8.0, 0.0);
  BemConfig cfg;
  cfg.tau = 0.1;
  GaussianStream s = derive_stream(4, 1);
  double expect = 3.0;  // |x0 - y0|
  simulate_coupled_pair(ou, cfg, std::vector<double>{2.0}, std::vector<double>{-1.0}, 30, s,
                        [&](std::size_t k, std::span<const double> a, std::span<const double> b) {
                          if (k > 0) expect /= 1.8;
                          CHECK(std::abs(a[0] - b[0]) == doctest::Approx(expect).epsilon(1e-12));
                        });
}

TEST_CASE("coupled pairs contract in mean square and per step") {
  const SdeModel ex51 = builtin_model("example51");
  BemConfig cfg;
  cfg.tau = 0.01;
  const std::size_t n_steps = 200, n_paths = 500;
  std::vector<double> mean_sq(n_steps + 1, 0.0);
  std::vector<double> dw(1);
  BemWorkspace wsx, wsy;
  for (std::size_t p = 0; p < n_paths; ++p) {
    GaussianStream s = derive_stream(909, p);
    std::vector<double> x{2.0}, y{-2.0};
    mean_sq[0] += 16.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      const double diff_before = x[0] - y[0];
      const double sigma_gap = std::sin(x[0]) - std::sin(y[0]);
      sample_increment(s, cfg.tau, dw);
      bem_step_into(ex51, cfg, x, dw, wsx);
      bem_step_into(ex51, cfg, y, dw, wsy);
      const double diff = x[0] - y[0];
      mean_sq[k + 1] += diff * diff;
      // One-sided-Lipschitz contraction of the implicit map, step by step.
      const double bound =
          std::abs(diff_before + sigma_gap * dw[0]) / (1.0 + 8.0 * cfg.tau) + 1e-9;
      CHECK(std::abs(diff) <= bound);
    }
  }
  // Monotone decay in mean square, with an absolute floor far below the decay
  // scale: once E|diff|^2 has fallen ~13 orders of magnitude the heavy-tailed
  // sample mean at 500 paths jitters at the 1e-11 relative level.
  for (std::size_t k = 0; k + 1 <= n_steps; ++k) {
    CHECK(mean_sq[k + 1] <= mean_sq[k] * (1.0 + 1e-12) + 1e-10 * mean_sq[0]);
  }
  const double final_mean = mean_sq[n_steps] / static_cast<double>(n_paths);
  CHECK(final_mean < 1e-4 * 16.0);
}

TEST_CASE("strong error is zero against itself") {
  const SdeModel ou = builtin_model("ou", 8.0, 1.0);
  const std::vector<double> taus{0.01};
  const auto points = strong_error_profile(ou, BemConfig{}, taus, 0.01, 1.0,
                                           std::vector<double>{1.0}, 10, 7, 1);
  REQUIRE(points.size() == 1);
  CHECK(points[0].sup_rms_error == 0.0);
}

TEST_CASE("strong error validates divisibility") {
  const SdeModel ou = builtin_model("ou", 8.0, 1.0);
  const std::vector<double> taus{0.015};
  CHECK_THROWS_AS(strong_error_profile(ou, BemConfig{}, taus, 0.01, 1.0,
                                       std::vector<double>{1.0}, 10, 7, 1),
                  ConfigError);
}

TEST_CASE("self-convergence order of the cubic/sine model sits near one half") {
  // A small start keeps the stiff deterministic transient (order ~1) from
  // drowning the noise contribution (order 1/2) in the sup-RMS error.
  const SdeModel ex51 = builtin_model("example51");
  const std::vector<double> taus{0.015625, 0.0078125, 0.00390625, 0.001953125};
  const auto points = strong_error_profile(ex51, BemConfig{}, taus, 0.000244140625 /* 2^-12 */,
                                           2.0, std::vector<double>{0.25}, 120, 11, 1);
  std::vector<std::pair<double, double>> fit_input;
  for (const auto& p : points) fit_input.emplace_back(p.tau, p.sup_rms_error);
  const OrderFit fit = fit_order(fit_input);
  CHECK(fit.slope > 0.35);
  CHECK(fit.slope < 0.85);
  CHECK(fit.r_squared > 0.9);
}

TEST_CASE("self-convergence order of the linear model is at least one half") {
  // Constant diffusion: the implicit theta scheme self-converges at order one,
  // so only the lower edge is asserted here.
  const SdeModel ou = builtin_model("ou", 8.0, 1.0);
  const std::vector<double> taus{0.0625, 0.03125, 0.015625, 0.0078125};
  const auto points = strong_error_profile(ou, BemConfig{}, taus, 0.0009765625, 2.0,
                                           std::vector<double>{1.0}, 200, 13, 1);
  std::vector<std::pair<double, double>> fit_input;
  for (const auto& p : points) fit_input.emplace_back(p.tau, p.sup_rms_error);
  const OrderFit fit = fit_order(fit_input);
  CHECK(fit.slope > 0.45);
  CHECK(fit.r_squared > 0.9);
}
