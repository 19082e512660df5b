#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergodic_bem {

// Invalid configuration or violated precondition. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Implicit-step solver failure. Carries the last residual and the location of the
// failing step so batch drivers can report it machine-readably. Exit code 2.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double last_residual, int iterations)
      : std::runtime_error(what), last_residual(last_residual), iterations(iterations) {}
  double last_residual = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::size_t step_index = 0;
  std::size_t path_index = 0;
};

// Sampling-based diagnostic failure (non-finite evaluation at a probe point,
// ergodicity cross-check disagreement, ...).
class DiagnosticError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Neumaier-compensated accumulator. The accumulated error does not grow with the
// number of terms, which matters for temporal averages over 1e5-1e6 summands.
class KahanSum {
public:
  KahanSum() = default;
  explicit KahanSum(double init) : sum_(init) {}

  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

  void reset() {
    sum_ = 0.0;
    comp_ = 0.0;
  }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// A is n x n row-major and is destroyed; the solution overwrites b.
// Intended for the small dense systems of the implicit step (d is tiny).
void solve_dense_inplace(std::vector<double>& a, std::vector<double>& b, std::size_t n);

// Round-trippable decimal rendering used for all CSV output, so identical runs
// produce byte-identical files.
std::string format_double(double v);

std::string format_u64(std::uint64_t v);

}  // namespace ergodic_bem
