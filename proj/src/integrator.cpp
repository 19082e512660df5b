#include "ergodic_bem/integrator.hpp"

#include <cmath>

#include "ergodic_bem/parallel.hpp"

namespace ergodic_bem {

void validate_step_setup(const SdeModel& model, const BemConfig& cfg) {
  if (!(cfg.tau > 0.0)) throw ConfigError("step size tau must be > 0");
  if (!(cfg.newton_tol > 0.0)) throw ConfigError("newton_tol must be > 0");
  if (cfg.newton_max_iter < 1) throw ConfigError("newton_max_iter must be >= 1");
  if (!(cfg.damping_min > 0.0) || cfg.damping_min > 1.0) {
    throw ConfigError("damping_min must lie in (0, 1]");
  }
  if (model.growth_hint > 1 && cfg.tau >= 1.0) {
    throw ConfigError("tau = " + format_double(cfg.tau) +
                      " refused: superlinear drift requires tau < 1");
  }
  if (!model.drift || !model.diffusion) throw ConfigError("model is missing evaluators");
}

namespace {

inline void apply_diffusion(std::span<const double> sig, std::span<const double> dw,
                            std::size_t d, std::size_t nd, std::span<double> out) {
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < nd; ++j) acc += sig[i * nd + j] * dw[j];
    out[i] += acc;
  }
}

// Residual F(y) = y - tau*b(y) - rhs; returns its norm, or NaN for non-finite drift.
inline double residual(const SdeModel& model, double tau, std::span<const double> y,
                       std::span<const double> rhs, std::span<double> b_buf,
                       std::span<double> f_out) {
  model.drift(y, b_buf);
  double norm_sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double fi = y[i] - tau * b_buf[i] - rhs[i];
    f_out[i] = fi;
    norm_sq += fi * fi;
  }
  return std::sqrt(norm_sq);
}

}  // namespace

StepStats bem_step_into(const SdeModel& model, const BemConfig& cfg, std::span<double> x,
                        std::span<const double> dw, BemWorkspace& ws) {
  const std::size_t d = static_cast<std::size_t>(model.state_dim);
  const std::size_t nd = static_cast<std::size_t>(model.noise_dim);
  const double tau = cfg.tau;

  ws.rhs.resize(d);
  ws.y.resize(d);
  ws.ynew.resize(d);
  ws.f.resize(d);
  ws.fnew.resize(d);
  ws.jac.resize(d * d);
  ws.bx.resize(d);
  ws.sig.resize(d * nd);

  // rhs = x + sigma(x) dW; predictor y = rhs + tau*b(x).
  model.diffusion(x, ws.sig);
  for (std::size_t i = 0; i < d; ++i) ws.rhs[i] = x[i];
  apply_diffusion(ws.sig, dw, d, nd, ws.rhs);
  model.drift(x, ws.bx);
  if (!all_finite(ws.bx) || !all_finite(ws.rhs)) {
    throw SolverError("non-finite drift or diffusion at the step's base point",
                      std::numeric_limits<double>::quiet_NaN(), 0);
  }
  for (std::size_t i = 0; i < d; ++i) ws.y[i] = ws.rhs[i] + tau * ws.bx[i];

  const double tol = cfg.newton_tol * (1.0 + norm2(std::span<const double>(x.data(), d)));
  double res = residual(model, tau, ws.y, ws.rhs, ws.bx, ws.f);
  StepStats stats;

  while (res > tol || !std::isfinite(res)) {
    if (!std::isfinite(res)) {
      throw SolverError("non-finite drift during Newton iteration", res, stats.iterations);
    }
    if (stats.iterations >= cfg.newton_max_iter) {
      throw SolverError("Newton failed to reach tolerance " + format_double(tol) + " after " +
                            std::to_string(stats.iterations) + " iterations",
                        res, stats.iterations);
    }
    ++stats.iterations;

    // J = I - tau * grad b(y), solve J delta = F.
    model.drift_jacobian(ws.y, ws.jac);
    for (std::size_t i = 0; i < d * d; ++i) ws.jac[i] = -tau * ws.jac[i];
    for (std::size_t i = 0; i < d; ++i) ws.jac[i * d + i] += 1.0;
    ws.fnew = ws.f;
    solve_dense_inplace(ws.jac, ws.fnew, d);  // fnew now holds delta

    double lambda = 1.0;
    while (true) {
      for (std::size_t i = 0; i < d; ++i) ws.ynew[i] = ws.y[i] - lambda * ws.fnew[i];
      const double res_new = residual(model, tau, ws.ynew, ws.rhs, ws.bx, ws.f);
      if (std::isfinite(res_new) && res_new < res) {
        ws.y.swap(ws.ynew);
        res = res_new;
        break;
      }
      lambda *= 0.5;
      if (lambda < cfg.damping_min) {
        throw SolverError("Newton damping exhausted (residual " + format_double(res) + ")", res,
                          stats.iterations);
      }
    }
  }

  for (std::size_t i = 0; i < d; ++i) x[i] = ws.y[i];
  stats.residual_norm = res;
  ws.newton_iterations += stats.iterations;
  ws.steps += 1;
  if (res > ws.max_residual) ws.max_residual = res;
  return stats;
}

StepOutcome bem_step(const SdeModel& model, const BemConfig& cfg, std::span<const double> x,
                     std::span<const double> dw) {
  validate_step_setup(model, cfg);
  std::vector<double> state(x.begin(), x.end());
  BemWorkspace ws;
  const StepStats stats = bem_step_into(model, cfg, state, dw, ws);
  return StepOutcome{std::move(state), stats.iterations, stats.residual_norm};
}

std::vector<double> em_step(const SdeModel& model, double tau, std::span<const double> x,
                            std::span<const double> dw) {
  if (!(tau > 0.0)) throw ConfigError("step size tau must be > 0");
  const std::size_t d = static_cast<std::size_t>(model.state_dim);
  const std::size_t nd = static_cast<std::size_t>(model.noise_dim);
  std::vector<double> b(d), sig(d * nd), out(x.begin(), x.end());
  model.drift(x, b);
  model.diffusion(x, sig);
  for (std::size_t i = 0; i < d; ++i) out[i] += tau * b[i];
  apply_diffusion(sig, dw, d, nd, out);
  return out;
}

std::vector<std::vector<double>> simulate_trajectory(const SdeModel& model, const BemConfig& cfg,
                                                     std::span<const double> x0,
                                                     std::size_t n_steps, GaussianStream& stream) {
  std::vector<std::vector<double>> traj;
  traj.reserve(n_steps + 1);
  simulate_path(model, cfg, x0, n_steps, stream, [&](std::size_t, std::span<const double> x) {
    traj.emplace_back(x.begin(), x.end());
  });
  return traj;
}

std::vector<StrongErrorPoint> strong_error_profile(const SdeModel& model, const BemConfig& base,
                                                   std::span<const double> taus, double tau_ref,
                                                   double horizon, std::span<const double> x0,
                                                   std::size_t n_paths, std::uint64_t master_seed,
                                                   std::size_t workers) {
  if (!(tau_ref > 0.0)) throw ConfigError("tau_ref must be > 0");
  if (taus.empty()) throw ConfigError("strong_error_profile: empty tau list");
  if (n_paths == 0) throw ConfigError("strong_error_profile: need at least one path");

  const double n_fine_real = horizon / tau_ref;
  const std::size_t n_fine = static_cast<std::size_t>(std::llround(n_fine_real));
  if (n_fine == 0 || std::abs(n_fine_real - static_cast<double>(n_fine)) > 1e-9 * n_fine_real) {
    throw ConfigError("horizon must be a whole number of reference steps");
  }

  struct TauInfo {
    double tau;
    std::size_t ratio;
    std::size_t n_coarse;
  };
  std::vector<TauInfo> infos;
  for (double tau : taus) {
    const double ratio_real = tau / tau_ref;
    const std::size_t ratio = static_cast<std::size_t>(std::llround(ratio_real));
    if (ratio == 0 || std::abs(ratio_real - static_cast<double>(ratio)) > 1e-9 * ratio_real) {
      throw ConfigError("tau = " + format_double(tau) +
                        " is not an integer multiple of tau_ref = " + format_double(tau_ref));
    }
    if (n_fine % ratio != 0) {
      throw ConfigError("horizon is not a whole number of steps at tau = " + format_double(tau));
    }
    infos.push_back({tau, ratio, n_fine / ratio});
  }

  BemConfig cfg_ref = base;
  cfg_ref.tau = tau_ref;
  validate_step_setup(model, cfg_ref);
  const std::size_t d = static_cast<std::size_t>(model.state_dim);
  const std::size_t nd = static_cast<std::size_t>(model.noise_dim);

  // Per-block accumulators of squared errors per coarse grid point, merged in
  // block order afterwards so results do not depend on the worker count.
  const std::size_t kBlock = 16;
  const std::size_t blocks = block_count(n_paths, kBlock);
  std::vector<std::vector<std::vector<double>>> partial(blocks);

  parallel_blocks(n_paths, kBlock, workers, [&](std::size_t b, std::size_t begin,
                                                std::size_t end) {
    auto& acc = partial[b];
    acc.assign(infos.size(), {});
    for (std::size_t t = 0; t < infos.size(); ++t) acc[t].assign(infos[t].n_coarse + 1, 0.0);

    std::vector<double> increments(n_fine * nd);
    std::vector<double> ref_states((n_fine + 1) * d);
    std::vector<double> state(d), dw(nd);
    BemWorkspace ws;

    for (std::size_t p = begin; p < end; ++p) {
      GaussianStream stream = derive_stream(master_seed, p);
      for (std::size_t k = 0; k < n_fine; ++k) {
        sample_increment(stream, tau_ref,
                         std::span<double>(increments.data() + k * nd, nd));
      }

      for (std::size_t i = 0; i < d; ++i) state[i] = x0[i];
      for (std::size_t i = 0; i < d; ++i) ref_states[i] = state[i];
      for (std::size_t k = 0; k < n_fine; ++k) {
        try {
          bem_step_into(model, cfg_ref, state,
                        std::span<const double>(increments.data() + k * nd, nd), ws);
        } catch (SolverError& err) {
          err.step_index = k;
          err.path_index = p;
          throw;
        }
        for (std::size_t i = 0; i < d; ++i) ref_states[(k + 1) * d + i] = state[i];
      }

      for (std::size_t t = 0; t < infos.size(); ++t) {
        const TauInfo& info = infos[t];
        const std::vector<double> coarse =
            aggregate_increments(increments, info.ratio, nd);
        BemConfig cfg_coarse = base;
        cfg_coarse.tau = info.tau;
        for (std::size_t i = 0; i < d; ++i) state[i] = x0[i];
        for (std::size_t k = 0; k < info.n_coarse; ++k) {
          try {
            bem_step_into(model, cfg_coarse, state,
                          std::span<const double>(coarse.data() + k * nd, nd), ws);
          } catch (SolverError& err) {
            err.step_index = k;
            err.path_index = p;
            throw;
          }
          double err_sq = 0.0;
          const double* ref = ref_states.data() + (k + 1) * info.ratio * d;
          for (std::size_t i = 0; i < d; ++i) {
            const double diff = state[i] - ref[i];
            err_sq += diff * diff;
          }
          acc[t][k + 1] += err_sq;
        }
      }
    }
  });

  std::vector<StrongErrorPoint> out;
  out.reserve(infos.size());
  for (std::size_t t = 0; t < infos.size(); ++t) {
    std::vector<double> total(infos[t].n_coarse + 1, 0.0);
    for (std::size_t b = 0; b < blocks; ++b) {
      if (partial[b].empty()) continue;
      for (std::size_t k = 0; k <= infos[t].n_coarse; ++k) total[k] += partial[b][t][k];
    }
    double sup = 0.0;
    for (std::size_t k = 1; k <= infos[t].n_coarse; ++k) {
      sup = std::max(sup, total[k] / static_cast<double>(n_paths));
    }
    out.push_back({infos[t].tau, std::sqrt(sup)});
  }
  return out;
}

}  // namespace ergodic_bem
