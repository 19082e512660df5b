#include "ergodic_bem/ergodic.hpp"

#include <cmath>

#include "ergodic_bem/parallel.hpp"

namespace ergodic_bem {

std::size_t deviation_steps(double tau, double alpha) {
  if (!(alpha > 1.0) || alpha > 2.0) {
    throw ConfigError("alpha = " + format_double(alpha) + " is outside the admissible range (1, 2]");
  }
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  const double n_real = std::pow(tau, -alpha);
  const long long n = std::llround(n_real);
  if (n < 2) {
    throw ConfigError("tau^-alpha = " + format_double(n_real) +
                      " rounds below 2 temporal-average terms; decrease tau");
  }
  return static_cast<std::size_t>(n);
}

double temporal_average(const SdeModel& model, const BemConfig& cfg, const TestFunction& h,
                        std::span<const double> x0, double alpha, GaussianStream& stream) {
  const std::size_t n = deviation_steps(cfg.tau, alpha);
  KahanSum sum;
  simulate_path(model, cfg, x0, n - 1, stream,
                [&](std::size_t, std::span<const double> x) { sum.add(h.value(x)); });
  return sum.value() / static_cast<double>(n);
}

namespace {

constexpr std::size_t kPathBlock = 16;

// Runs fn(path_index) for every index, writing only into per-path slots, then
// the caller reduces sequentially: worker-count independent by construction.
void for_each_path(std::size_t n_paths, std::size_t workers,
                   const std::function<void(std::size_t)>& fn) {
  parallel_blocks(n_paths, kPathBlock, workers, [&](std::size_t, std::size_t begin,
                                                    std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
  });
}

}  // namespace

ErgodicLimitEstimate estimate_ergodic_limit(const SdeModel& model, const BemConfig& cfg_fine,
                                            const TestFunction& h,
                                            const std::vector<std::vector<double>>& x0_list,
                                            double horizon, std::size_t n_paths,
                                            std::uint64_t master_seed, std::size_t workers) {
  if (x0_list.empty()) throw ConfigError("estimate_ergodic_limit: empty initial-value list");
  if (n_paths < 2) throw ConfigError("estimate_ergodic_limit: need at least 2 paths");
  if (!(horizon > 0.0)) throw ConfigError("estimate_ergodic_limit: horizon must be > 0");
  validate_step_setup(model, cfg_fine);

  const std::size_t n_steps = static_cast<std::size_t>(std::llround(horizon / cfg_fine.tau));
  if (n_steps == 0) throw ConfigError("estimate_ergodic_limit: horizon shorter than one step");

  ErgodicLimitEstimate est;
  est.tau_fine = cfg_fine.tau;
  est.horizon = horizon;
  est.n_paths = n_paths;

  std::vector<double> endpoint(x0_list.size() * n_paths);
  for_each_path(endpoint.size(), workers, [&](std::size_t idx) {
    const std::size_t which_x0 = idx / n_paths;
    GaussianStream stream = derive_stream(master_seed, idx);
    double value = 0.0;
    try {
      simulate_path(model, cfg_fine, x0_list[which_x0], n_steps, stream,
                    [&](std::size_t k, std::span<const double> x) {
                      if (k == n_steps) value = h.value(x);
                    });
    } catch (SolverError& err) {
      err.path_index = idx;
      throw;
    }
    endpoint[idx] = value;
  });

  for (std::size_t j = 0; j < x0_list.size(); ++j) {
    const MeanStderr ms =
        mean_stderr(std::span<const double>(endpoint.data() + j * n_paths, n_paths));
    est.per_x0_value.push_back(ms.mean);
    est.per_x0_stderr.push_back(ms.stderr_);
  }

  // Ergodicity cross-check: the limit must not depend on the initial value.
  // The absolute floor keeps the check meaningful when the endpoint spread
  // underflows (fully mixed chains can agree to hundreds of digits).
  double value_scale = 0.0;
  for (double v : est.per_x0_value) value_scale = std::max(value_scale, std::abs(v));
  for (std::size_t i = 0; i < x0_list.size(); ++i) {
    for (std::size_t j = i + 1; j < x0_list.size(); ++j) {
      const double gap = std::abs(est.per_x0_value[i] - est.per_x0_value[j]);
      const double joint = std::sqrt(est.per_x0_stderr[i] * est.per_x0_stderr[i] +
                                     est.per_x0_stderr[j] * est.per_x0_stderr[j]);
      if (gap > 4.0 * joint + 1e-12 * (1.0 + value_scale)) {
        throw DiagnosticError(
            "ergodicity check failed: estimates from initial values " + std::to_string(i) +
            " and " + std::to_string(j) + " differ by " + format_double(gap) +
            " which exceeds 4 x joint stderr " + format_double(joint));
      }
    }
  }

  const MeanStderr pooled = mean_stderr(endpoint);
  est.value = pooled.mean;
  est.stderr_ = pooled.stderr_;
  return est;
}

DeviationBatch sample_deviations(const SdeModel& model, const BemConfig& cfg,
                                 const TestFunction& h, std::span<const double> x0, double alpha,
                                 std::size_t n_paths, const ErgodicLimitEstimate& pi_h,
                                 std::uint64_t master_seed, std::size_t workers) {
  if (n_paths == 0) throw ConfigError("sample_deviations: need at least one path");
  validate_step_setup(model, cfg);
  const std::size_t n_steps = deviation_steps(cfg.tau, alpha);
  const double scale = std::pow(cfg.tau, -(alpha - 1.0) / 2.0);

  DeviationBatch batch;
  batch.alpha = alpha;
  batch.tau = cfg.tau;
  batch.n_steps_used = n_steps;
  batch.pi_h_reference = pi_h.value;
  batch.pi_h_stderr = pi_h.stderr_;
  batch.systematic_bound = pi_h.stderr_ * scale;
  batch.model_id = model.name;
  batch.h_id = h.name;
  batch.master_seed = master_seed;
  batch.samples.assign(n_paths, 0.0);

  std::vector<double> x0_copy(x0.begin(), x0.end());
  for_each_path(n_paths, workers, [&](std::size_t i) {
    GaussianStream stream = derive_stream(master_seed, i);
    try {
      const double avg = temporal_average(model, cfg, h, x0_copy, alpha, stream);
      batch.samples[i] = scale * (avg - pi_h.value);
    } catch (SolverError& err) {
      err.path_index = i;
      throw;
    }
  });
  return batch;
}

std::vector<CltTableRow> clt_table(const SdeModel& model, const BemConfig& base,
                                   const TestFunction& h, const TestFunction& f, double alpha,
                                   std::span<const double> taus, std::size_t n_paths,
                                   std::span<const double> x0, const ErgodicLimitEstimate& pi_h,
                                   std::uint64_t master_seed, std::size_t workers) {
  if (taus.empty()) throw ConfigError("clt_table: empty tau list");
  for (std::size_t i = 1; i < taus.size(); ++i) {
    if (!(taus[i] < taus[i - 1])) throw ConfigError("clt_table: taus must be strictly descending");
  }
  std::vector<CltTableRow> rows;
  rows.reserve(taus.size());
  std::vector<double> fz(n_paths);
  for (double tau : taus) {
    BemConfig cfg = base;
    cfg.tau = tau;
    const DeviationBatch batch =
        sample_deviations(model, cfg, h, x0, alpha, n_paths, pi_h, master_seed, workers);
    for (std::size_t i = 0; i < n_paths; ++i) {
      fz[i] = f.value(std::span<const double>(&batch.samples[i], 1));
    }
    const MeanStderr ms = mean_stderr(fz);
    rows.push_back({tau, batch.n_steps_used, ms.mean, ms.stderr_});
  }
  return rows;
}

BiasOrderResult invariant_bias_order(const SdeModel& model, const BemConfig& base,
                                     const TestFunction& f, std::span<const double> taus,
                                     double tau_ref, double horizon, std::size_t n_paths,
                                     std::uint64_t master_seed, std::size_t workers,
                                     double burn_in_time) {
  if (taus.empty()) throw ConfigError("invariant_bias_order: empty tau list");
  double min_tau = taus[0];
  for (double t : taus) min_tau = std::min(min_tau, t);
  if (!(tau_ref <= min_tau / 8.0)) {
    throw ConfigError("invariant_bias_order: tau_ref must be at most min(taus)/8");
  }
  if (n_paths < 2) throw ConfigError("invariant_bias_order: need at least 2 replicates");

  // Replicate time averages of f after burn-in; the replicate spread sets the
  // Monte Carlo noise floor for the bias.
  auto pi_tau_estimate = [&](double tau, std::uint64_t seed_offset) {
    BemConfig cfg = base;
    cfg.tau = tau;
    validate_step_setup(model, cfg);
    const std::size_t burn = static_cast<std::size_t>(std::ceil(burn_in_time / tau));
    const std::size_t keep = static_cast<std::size_t>(std::llround(horizon / tau));
    if (keep < 2) throw ConfigError("invariant_bias_order: horizon too short at tau");
    std::vector<double> averages(n_paths);
    std::vector<double> x0(static_cast<std::size_t>(model.state_dim), 0.0);
    for_each_path(n_paths, workers, [&](std::size_t i) {
      GaussianStream stream = derive_stream(master_seed + seed_offset, i);
      KahanSum sum;
      simulate_path(model, cfg, x0, burn + keep, stream,
                    [&](std::size_t k, std::span<const double> x) {
                      if (k > burn) sum.add(f.value(x));
                    });
      averages[i] = sum.value() / static_cast<double>(keep);
    });
    return mean_stderr(averages);
  };

  BiasOrderResult result;
  const MeanStderr ref = pi_tau_estimate(tau_ref, 0x9e3779b9ull);
  result.pi_ref = ref.mean;
  result.pi_ref_stderr = ref.stderr_;

  std::vector<std::pair<double, double>> fit_points;
  for (double tau : taus) {
    const MeanStderr ms = pi_tau_estimate(tau, 0);
    BiasOrderRow row;
    row.tau = tau;
    row.pi_tau = ms.mean;
    row.stderr_ = ms.stderr_;
    row.abs_bias = std::abs(ms.mean - ref.mean);
    result.rows.push_back(row);
    const double noise = 2.0 * std::sqrt(ms.stderr_ * ms.stderr_ + ref.stderr_ * ref.stderr_);
    if (row.abs_bias > noise && row.abs_bias > 0.0) {
      fit_points.emplace_back(tau, row.abs_bias);
    }
  }

  if (fit_points.size() >= 3) {
    result.conclusive = true;
    result.fit = fit_order(fit_points);
  }
  return result;
}

}  // namespace ergodic_bem
