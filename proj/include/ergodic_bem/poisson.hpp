#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ergodic_bem/integrator.hpp"
#include "ergodic_bem/model.hpp"

namespace ergodic_bem {

struct GridSpec {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t n = 301;
};

// Gridded solution of the generator equation L phi = h - pi(h), built from the
// time-integral representation phi(x) = -int_0^T (E h(X^x(t)) - pi(h)) dt with
// an inner simulation at step quad_tau and trapezoid weights in t.
//
// All grid points share the same driving increments (common random numbers), so
// the Monte Carlo error is smooth in x and central differences of phi stay
// usable. Inner paths come in antithetic pairs (a stream and its sign-flipped
// mirror), which removes the noise entirely for linear problems.
struct PoissonTable {
  GridSpec grid;
  std::vector<double> x;
  std::vector<double> phi;
  std::vector<double> phi_stderr;  // Monte Carlo stderr per grid point
  std::vector<double> grad_phi;    // central differences, one-sided at the ends
  double t_trunc = 0.0;
  double quad_tau = 0.0;
  std::size_t n_inner_paths = 0;  // total trajectories, antithetic mirrors included
  std::uint64_t seed = 0;
  double pi_h_used = 0.0;
  std::string model_id, h_id;
  // Reported tail bound K*exp(-rate*T)/rate using the empirical dissipativity
  // rate as a stand-in for the true mixing rate; NaN when no rate was supplied.
  double trunc_error_bound = 0.0;
};

struct VarianceEstimate {
  double value = 0.0;  // nonnegative
  double stderr_ = 0.0;
  std::string method;  // "ergodic-average" or "grid-quadrature"
  std::size_t clamp_count = 0;  // states clamped to the grid range
  std::size_t n_batches = 0;
};

// Per-path decomposition of the deviation statistic at alpha = 2 into the
// martingale part H (gradient-of-phi weighted noise sums) and the remainder
// R = Z - H.
struct DecompositionReport {
  std::vector<double> z_samples;
  std::vector<double> h_samples;
  std::vector<double> r_samples;
  double tau = 0.0;
  std::size_t m = 0;  // round(tau^-2)
  std::size_t clamp_count = 0;
};

PoissonTable solve_phi(const SdeModel& model, const TestFunction& h, double pi_h,
                       const GridSpec& grid, double t_trunc, double quad_tau,
                       std::size_t n_inner_paths, std::uint64_t master_seed, std::size_t workers,
                       double mixing_rate_hint = 0.0, bool antithetic = true);

// Generator application L f = <grad f, b> + 0.5 <hess f, sigma sigma^T>_HS.
double generator_apply(const SdeModel& model, const VectorFn& f_grad, const VectorFn& f_hess,
                       std::span<const double> x);

// Max-abs defect of the table against L phi = h - pi(h) over interior grid
// points (5 excluded at each end), using the stored gradient and a central
// second difference of the stored phi. Requires n >= 101 grid points.
double poisson_residual(const PoissonTable& table, const SdeModel& model, const TestFunction& h,
                        double pi_h);

// Ergodic average of |sigma^T grad phi|^2 along BEM trajectories, grad phi
// linearly interpolated from the table (clamped outside the grid, counted).
// n_steps is the total kept step budget across n_replicates trajectories;
// burn_in_steps are discarded per trajectory. Standard error by batch means
// (>= 30 batches).
VarianceEstimate asymptotic_variance(const SdeModel& model, const PoissonTable& table,
                                     const BemConfig& cfg, std::span<const double> x0,
                                     std::size_t n_steps, std::size_t burn_in_steps,
                                     std::uint64_t master_seed, std::size_t n_replicates = 1,
                                     std::size_t workers = 1);

// Accumulates Z and H along the same paths with the same increments; R = Z - H
// per path, exactly as accumulated.
DecompositionReport clt_decomposition(const SdeModel& model, const PoissonTable& table,
                                      const BemConfig& cfg, const TestFunction& h, double pi_h,
                                      std::span<const double> x0, std::size_t n_paths,
                                      std::uint64_t master_seed, std::size_t workers);

// First-variation route to the gradient of phi at a point, for cross-checking
// the finite-difference table: the derivative process eta is integrated along
// each inner path (implicitly in the drift, like the state), and
// grad phi(x) = -int_0^T E <grad h(X(t)), eta(t)> dt. Scalar models only.
double grad_phi_variational(const SdeModel& model, const TestFunction& h, double x,
                            double t_trunc, double quad_tau, std::size_t n_inner_paths,
                            std::uint64_t master_seed);

// Linear interpolation of grad_phi with clamping; bumps clamp_count when x
// falls outside the grid.
double interp_grad_phi(const PoissonTable& table, double x, std::size_t* clamp_count);

// Table serialization: CSV rows (x, phi, grad_phi) preceded by a '#' header
// block recording provenance (t_trunc, quad_tau, n_inner_paths, seed, ...).
std::string poisson_table_to_csv(const PoissonTable& table);
PoissonTable poisson_table_from_csv(const std::string& text);

}  // namespace ergodic_bem
