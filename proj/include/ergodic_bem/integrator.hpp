#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/model.hpp"
#include "ergodic_bem/rng.hpp"

namespace ergodic_bem {

// Controls for the implicit step. newton_tol is relative: a step from x accepts
// once the residual norm drops below newton_tol * (1 + |x|).
struct BemConfig {
  double tau = 0.01;
  double newton_tol = 1e-12;
  int newton_max_iter = 50;
  double damping_min = 9.5367431640625e-07;  // 2^-20
};

struct StepStats {
  int iterations = 0;
  double residual_norm = 0.0;
};

struct StepOutcome {
  std::vector<double> state;
  int iterations = 0;
  double residual_norm = 0.0;
};

// Reusable per-path buffers plus solver counters. Counters merge by integer sum
// and max, so aggregation order never affects reported totals.
struct BemWorkspace {
  std::vector<double> rhs, y, ynew, f, fnew, jac, bx, sig;
  long long newton_iterations = 0;
  long long steps = 0;
  double max_residual = 0.0;
};

// Throws ConfigError for invalid controls, and for tau >= 1 on superlinear
// models (growth_hint > 1), where large implicit steps are a usage error.
void validate_step_setup(const SdeModel& model, const BemConfig& cfg);

// One implicit step: solves y - tau*b(y) = x + sigma(x)*dW by damped Newton
// (halve the update until the residual decreases), starting from the explicit
// predictor. For dissipative drift the solved map is strongly monotone, so the
// root is unique. x is updated in place. Throws SolverError on divergence or
// non-finite drift values.
StepStats bem_step_into(const SdeModel& model, const BemConfig& cfg, std::span<double> x,
                        std::span<const double> dw, BemWorkspace& ws);

StepOutcome bem_step(const SdeModel& model, const BemConfig& cfg, std::span<const double> x,
                     std::span<const double> dw);

// Explicit Euler-Maruyama contrast: x + tau*b(x) + sigma(x)*dW.
std::vector<double> em_step(const SdeModel& model, double tau, std::span<const double> x,
                            std::span<const double> dw);

// Applies bem_step n_steps times, visiting every state including the initial one:
// visit(step_index, state_span) for step_index = 0..n_steps. O(1) memory beyond
// the visitor. Solver errors propagate with the failing step index attached.
template <class Visitor>
void simulate_path(const SdeModel& model, const BemConfig& cfg, std::span<const double> x0,
                   std::size_t n_steps, GaussianStream& stream, Visitor&& visit) {
  validate_step_setup(model, cfg);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
  BemWorkspace ws;
  visit(std::size_t{0}, std::span<const double>(x));
  for (std::size_t n = 0; n < n_steps; ++n) {
    sample_increment(stream, cfg.tau, dw);
    try {
      bem_step_into(model, cfg, x, dw, ws);
    } catch (SolverError& err) {
      err.step_index = n;
      throw;
    }
    visit(n + 1, std::span<const double>(x));
  }
}

std::vector<std::vector<double>> simulate_trajectory(const SdeModel& model, const BemConfig& cfg,
                                                     std::span<const double> x0,
                                                     std::size_t n_steps, GaussianStream& stream);

// Two paths driven by identical increments drawn once per step:
// visit(step_index, state_a, state_b) including the initial pair.
template <class Visitor>
void simulate_coupled_pair(const SdeModel& model, const BemConfig& cfg, std::span<const double> x0,
                           std::span<const double> y0, std::size_t n_steps, GaussianStream& stream,
                           Visitor&& visit) {
  validate_step_setup(model, cfg);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> y(y0.begin(), y0.end());
  std::vector<double> dw(static_cast<std::size_t>(model.noise_dim));
  BemWorkspace wsx, wsy;
  visit(std::size_t{0}, std::span<const double>(x), std::span<const double>(y));
  for (std::size_t n = 0; n < n_steps; ++n) {
    sample_increment(stream, cfg.tau, dw);
    try {
      bem_step_into(model, cfg, x, dw, wsx);
      bem_step_into(model, cfg, y, dw, wsy);
    } catch (SolverError& err) {
      err.step_index = n;
      throw;
    }
    visit(n + 1, std::span<const double>(x), std::span<const double>(y));
  }
}

struct StrongErrorPoint {
  double tau = 0.0;
  double sup_rms_error = 0.0;  // sup over that tau's grid times of the RMS difference
};

// Self-convergence measurement: a reference path at tau_ref and coarse paths at
// each tau share one Brownian path via increment aggregation. Every tau must be
// an integer multiple of tau_ref and divide horizon into whole steps.
std::vector<StrongErrorPoint> strong_error_profile(const SdeModel& model, const BemConfig& base,
                                                   std::span<const double> taus, double tau_ref,
                                                   double horizon, std::span<const double> x0,
                                                   std::size_t n_paths, std::uint64_t master_seed,
                                                   std::size_t workers);

}  // namespace ergodic_bem
