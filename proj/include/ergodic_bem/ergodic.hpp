#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ergodic_bem/integrator.hpp"
#include "ergodic_bem/model.hpp"
#include "ergodic_bem/rng.hpp"
#include "ergodic_bem/stats.hpp"

namespace ergodic_bem {

// Long-horizon Monte Carlo estimate of the ergodic limit pi(h): the mean of
// h(X_N) at a fine step size, cross-checked across initial values.
struct ErgodicLimitEstimate {
  double value = 0.0;    // pooled over all initial values
  double stderr_ = 0.0;
  double tau_fine = 0.0;
  double horizon = 0.0;
  std::size_t n_paths = 0;  // per initial value
  std::vector<double> per_x0_value;
  std::vector<double> per_x0_stderr;
};

// Monte Carlo samples of the deviation statistic
//   Z = tau^{-(alpha-1)/2} * (temporal average - pi_h_reference)
// together with provenance and the systematic shift the reference error induces.
struct DeviationBatch {
  std::vector<double> samples;
  double alpha = 2.0;
  double tau = 0.0;
  std::size_t n_steps_used = 0;  // N = round(tau^-alpha)
  double pi_h_reference = 0.0;
  double pi_h_stderr = 0.0;
  double systematic_bound = 0.0;  // pi_h_stderr * tau^{-(alpha-1)/2}
  std::string model_id, h_id;
  std::uint64_t master_seed = 0;
};

struct CltTableRow {
  double tau = 0.0;
  std::size_t n_steps = 0;
  double f_mean = 0.0;
  double f_stderr = 0.0;
};

struct BiasOrderRow {
  double tau = 0.0;
  double pi_tau = 0.0;
  double stderr_ = 0.0;
  double abs_bias = 0.0;
};

struct BiasOrderResult {
  std::vector<BiasOrderRow> rows;
  double pi_ref = 0.0;
  double pi_ref_stderr = 0.0;
  bool conclusive = false;  // false: bias indistinguishable from Monte Carlo noise
  std::optional<OrderFit> fit;
};

// Number of temporal-average terms for a step size and deviation exponent.
// Throws ConfigError unless alpha is in (1,2] and N >= 2.
std::size_t deviation_steps(double tau, double alpha);

// Mean of h over the first N = round(tau^-alpha) states (including the initial
// state), accumulated with compensated summation.
double temporal_average(const SdeModel& model, const BemConfig& cfg, const TestFunction& h,
                        std::span<const double> x0, double alpha, GaussianStream& stream);

// Simulates n_paths per initial value to time horizon at the fine step size and
// averages h at the endpoint. Estimates from different initial values must agree
// within 4 joint standard errors; otherwise DiagnosticError (ergodicity check).
ErgodicLimitEstimate estimate_ergodic_limit(const SdeModel& model, const BemConfig& cfg_fine,
                                            const TestFunction& h,
                                            const std::vector<std::vector<double>>& x0_list,
                                            double horizon, std::size_t n_paths,
                                            std::uint64_t master_seed, std::size_t workers);

DeviationBatch sample_deviations(const SdeModel& model, const BemConfig& cfg,
                                 const TestFunction& h, std::span<const double> x0, double alpha,
                                 std::size_t n_paths, const ErgodicLimitEstimate& pi_h,
                                 std::uint64_t master_seed, std::size_t workers);

// One row per tau (descending): mean and standard error of f(Z). The same master
// seed drives every row, and reductions run in fixed path order, so the table is
// bit-identical across runs and worker counts.
std::vector<CltTableRow> clt_table(const SdeModel& model, const BemConfig& base,
                                   const TestFunction& h, const TestFunction& f, double alpha,
                                   std::span<const double> taus, std::size_t n_paths,
                                   std::span<const double> x0, const ErgodicLimitEstimate& pi_h,
                                   std::uint64_t master_seed, std::size_t workers);

// Stationary-average bias fit: pi_tau(f) estimated by replicate time averages
// after burn-in at each tau, compared against a reference at tau_ref on a
// log-log scale. Bias below the noise floor yields an inconclusive verdict.
BiasOrderResult invariant_bias_order(const SdeModel& model, const BemConfig& base,
                                     const TestFunction& f, std::span<const double> taus,
                                     double tau_ref, double horizon, std::size_t n_paths,
                                     std::uint64_t master_seed, std::size_t workers,
                                     double burn_in_time);

}  // namespace ergodic_bem
