#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ergodic_bem {

// Standard normal CDF.
double normal_cdf(double z);

// Kolmogorov-Smirnov comparison of an empirical sample against a centered normal
// with the given variance. No asymptotic p-values: the raw statistic plus a
// configured threshold is the verdict.
struct KsReport {
  double statistic = 0.0;  // sup-norm distance, in [0,1]
  std::size_t n = 0;
  double reference_variance = 0.0;
  double pass_threshold = 0.0;

  bool passed() const { return statistic < pass_threshold; }
};

// pass_threshold <= 0 selects the default 2 * 1.63 / sqrt(n) (99% Kolmogorov
// quantile with 2x slack for simulation bias on top of sampling noise).
// variance == 0 is accepted only if every sample is 0; otherwise ConfigError.
KsReport ks_to_normal(std::span<const double> samples, double variance,
                      double pass_threshold = 0.0);

// Least-squares line through (log tau, log error); slope estimates a convergence
// order from a sweep of positive (tau, error) pairs.
struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (log tau, log error)
};

OrderFit fit_order(std::span<const std::pair<double, double>> tau_error);

struct MomentSummary {
  int p = 0;
  double value = 0.0;   // mean of |sample|^p
  double stderr_ = 0.0; // batch-means standard error
};

std::vector<MomentSummary> summarize(std::span<const double> samples, std::span<const int> p_list);

// Mean and plain standard error of a sample.
struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  double variance = 0.0;  // unbiased sample variance
};

MeanStderr mean_stderr(std::span<const double> samples);

}  // namespace ergodic_bem
