#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ergodic_bem {

using VectorFn = std::function<void(std::span<const double>, std::span<double>)>;
using ScalarFn = std::function<double(std::span<const double>)>;

// An autonomous SDE problem dX = b(X) dt + sigma(X) dW on R^d with D-dimensional
// noise. Evaluators must be pure; models are immutable after construction and
// safe to share read-only across workers.
struct SdeModel {
  int state_dim = 1;
  int noise_dim = 1;
  std::string name;
  // Polynomial order of the drift; superlinear models (order > 1) refuse step
  // sizes tau >= 1 in the implicit integrator.
  int growth_hint = 1;

  VectorFn drift;               // out has d components
  VectorFn drift_jacobian;      // out is d x d row-major
  VectorFn diffusion;           // out is d x D row-major
  VectorFn diffusion_jacobian;  // 1-D models only: out[j] = d sigma_{0j} / dx

  // Set for built-ins that violate the bounded/Lipschitz diffusion contract the
  // dissipativity analysis assumes (they are admitted as stress tests).
  std::string warning;

  bool is_1d() const { return state_dim == 1 && noise_dim == 1; }
};

// Scalar observable h with optional analytic gradient.
struct TestFunction {
  std::string name;
  ScalarFn value;
  VectorFn gradient;  // may be empty; callers fall back to finite differences
};

// Empirical estimates of the one-sided dissipativity constant and diffusion
// bounds, probed on a ball. This reports what was observed at the probes; it
// certifies nothing globally.
struct AssumptionReport {
  double c1_hat = 0.0;         // inf over pairs of -<u-v, b(u)-b(v)> / |u-v|^2
  double sigma_sup_hat = 0.0;  // max Hilbert-Schmidt norm of sigma over probes
  double sigma_lip_hat = 0.0;  // max ||sigma(u)-sigma(v)||_HS / |u-v|
  std::size_t n_probes = 0;
  double probe_radius = 0.0;
  // Whether c1_hat > 7.5 * sigma_lip_hat^2 held at the probes.
  bool dissipativity_margin_ok = false;
};

// Built-in problems: "example51" (cubic drift, sine diffusion), "example52"
// (cubic drift, quadratic diffusion; unbounded sigma, carries a warning) and
// "ou" (linear drift -theta*x, constant diffusion s). All are scalar.
// Unknown names raise ConfigError.
SdeModel builtin_model(const std::string& name, double ou_theta = 8.0, double ou_s = 1.0);

// Built-in observables: one, x, x2, x4, x5, sin_plus_one, cos, sin_x6.
TestFunction builtin_test_function(const std::string& name);

// Wraps a drift evaluator into a central-difference Jacobian with step
// max(1e-6, 1e-6 * |x|).
VectorFn finite_difference_jacobian(VectorFn f, int in_dim, int out_dim);

// Central-difference gradient of a scalar function, same stepping rule.
VectorFn finite_difference_gradient(ScalarFn f, int dim);

// Samples pairs uniformly in the ball of probe_radius and reports empirical
// dissipativity/diffusion constants. Deterministic for a fixed seed. A
// non-finite drift value raises DiagnosticError naming the probe point.
AssumptionReport estimate_assumptions(const SdeModel& model, std::size_t n_probes,
                                      double probe_radius, std::uint64_t seed);

// Convenience builders for scalar models/test functions.
SdeModel make_scalar_model(std::string name, std::function<double(double)> drift,
                           std::function<double(double)> drift_prime,
                           std::function<double(double)> diffusion,
                           std::function<double(double)> diffusion_prime, int growth_hint);

TestFunction make_scalar_test_function(std::string name, std::function<double(double)> value,
                                       std::function<double(double)> derivative);

}  // namespace ergodic_bem
