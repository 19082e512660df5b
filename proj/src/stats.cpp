#include "ergodic_bem/stats.hpp"

#include <algorithm>
#include <cmath>

#include "ergodic_bem/common.hpp"

namespace ergodic_bem {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

KsReport ks_to_normal(std::span<const double> samples, double variance, double pass_threshold) {
  if (samples.empty()) throw ConfigError("ks_to_normal: empty sample");
  KsReport report;
  report.n = samples.size();
  report.reference_variance = variance;
  report.pass_threshold =
      pass_threshold > 0.0 ? pass_threshold : 2.0 * 1.63 / std::sqrt(static_cast<double>(report.n));

  if (variance < 0.0) throw ConfigError("ks_to_normal: negative variance");
  if (variance == 0.0) {
    for (double s : samples) {
      if (s != 0.0) {
        throw ConfigError("ks_to_normal: zero variance with nonzero samples");
      }
    }
    report.statistic = 0.0;
    return report;
  }

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = std::sqrt(variance);
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = normal_cdf(sorted[i] / sd);
    const double lower = f - static_cast<double>(i) / n;
    const double upper = static_cast<double>(i + 1) / n - f;
    d = std::max({d, lower, upper});
  }
  report.statistic = d;
  return report;
}

OrderFit fit_order(std::span<const std::pair<double, double>> tau_error) {
  if (tau_error.size() < 3) throw ConfigError("fit_order: need at least 3 points");
  OrderFit fit;
  fit.points.reserve(tau_error.size());
  for (const auto& [tau, err] : tau_error) {
    if (!(tau > 0.0) || !(err > 0.0)) {
      throw ConfigError("fit_order: points must be positive (floor errors at the noise level "
                        "and mark the fit inconclusive instead)");
    }
    fit.points.emplace_back(std::log(tau), std::log(err));
  }
  const double n = static_cast<double>(fit.points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : fit.points) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : fit.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_order: all tau values coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& [x, y] : fit.points) {
    const double r = y - (fit.intercept + fit.slope * x);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : std::max(0.0, 1.0 - ss_res / syy);
  return fit;
}

std::vector<MomentSummary> summarize(std::span<const double> samples, std::span<const int> p_list) {
  if (samples.empty()) throw ConfigError("summarize: empty sample");
  std::vector<MomentSummary> out;
  out.reserve(p_list.size());
  const std::size_t n = samples.size();
  const std::size_t n_batches = std::min<std::size_t>(30, n);
  const std::size_t batch_len = n / n_batches;
  for (int p : p_list) {
    MomentSummary m;
    m.p = p;
    KahanSum total;
    std::vector<double> batch_means;
    batch_means.reserve(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * batch_len;
      const std::size_t end = (b + 1 == n_batches) ? n : begin + batch_len;
      KahanSum batch;
      for (std::size_t i = begin; i < end; ++i) {
        batch.add(std::pow(std::abs(samples[i]), p));
      }
      total.add(batch.value());
      batch_means.push_back(batch.value() / static_cast<double>(end - begin));
    }
    m.value = total.value() / static_cast<double>(n);
    if (n_batches > 1) {
      double ss = 0.0;
      for (double bm : batch_means) ss += (bm - m.value) * (bm - m.value);
      const double var_batch = ss / static_cast<double>(n_batches - 1);
      m.stderr_ = std::sqrt(var_batch / static_cast<double>(n_batches));
    }
    out.push_back(m);
  }
  return out;
}

MeanStderr mean_stderr(std::span<const double> samples) {
  MeanStderr r;
  if (samples.empty()) return r;
  KahanSum sum;
  for (double s : samples) sum.add(s);
  r.mean = sum.value() / static_cast<double>(samples.size());
  if (samples.size() > 1) {
    KahanSum ss;
    for (double s : samples) ss.add((s - r.mean) * (s - r.mean));
    r.variance = ss.value() / static_cast<double>(samples.size() - 1);
    r.stderr_ = std::sqrt(r.variance / static_cast<double>(samples.size()));
  }
  return r;
}

}  // namespace ergodic_bem
