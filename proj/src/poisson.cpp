#include "ergodic_bem/poisson.hpp"

#include <cmath>
#include <sstream>

#include "ergodic_bem/ergodic.hpp"
#include "ergodic_bem/parallel.hpp"
#include "ergodic_bem/rng.hpp"
#include "ergodic_bem/version.hpp"

namespace ergodic_bem {

namespace {

void require_scalar(const SdeModel& model, const char* who) {
  if (!model.is_1d()) {
    throw ConfigError(std::string(who) + " supports scalar models only (d = D = 1)");
  }
}

}  // namespace

PoissonTable solve_phi(const SdeModel& model, const TestFunction& h, double pi_h,
                       const GridSpec& grid, double t_trunc, double quad_tau,
                       std::size_t n_inner_paths, std::uint64_t master_seed, std::size_t workers,
                       double mixing_rate_hint, bool antithetic) {
  require_scalar(model, "solve_phi");
  if (grid.n < 2) throw ConfigError("solve_phi: grid needs at least 2 points");
  if (!(grid.hi > grid.lo)) throw ConfigError("solve_phi: grid bounds must satisfy lo < hi");
  if (!(t_trunc > 0.0)) throw ConfigError("solve_phi: t_trunc must be > 0");
  if (!(quad_tau > 0.0) || quad_tau > t_trunc / 100.0) {
    throw ConfigError("solve_phi: quad_tau must be positive and at most t_trunc/100");
  }
  if (antithetic && n_inner_paths % 2 != 0) {
    throw ConfigError("solve_phi: n_inner_paths must be even for antithetic pairs");
  }
  const std::size_t n_streams = antithetic ? n_inner_paths / 2 : n_inner_paths;
  if (n_streams < 2) throw ConfigError("solve_phi: need at least 2 independent inner paths");

  BemConfig cfg;
  cfg.tau = quad_tau;
  validate_step_setup(model, cfg);

  const std::size_t n_t = static_cast<std::size_t>(std::llround(t_trunc / quad_tau));
  const std::size_t n_grid = grid.n;
  const double dx = (grid.hi - grid.lo) / static_cast<double>(n_grid - 1);

  PoissonTable table;
  table.grid = grid;
  table.t_trunc = t_trunc;
  table.quad_tau = quad_tau;
  table.n_inner_paths = n_inner_paths;
  table.seed = master_seed;
  table.pi_h_used = pi_h;
  table.model_id = model.name;
  table.h_id = h.name;
  table.x.resize(n_grid);
  for (std::size_t j = 0; j < n_grid; ++j) {
    table.x[j] = grid.lo + dx * static_cast<double>(j);
  }

  const std::size_t kBlock = 4;
  const std::size_t blocks = block_count(n_streams, kBlock);
  std::vector<std::vector<double>> partial_sum(blocks), partial_sq(blocks);

  parallel_blocks(n_streams, kBlock, workers, [&](std::size_t b, std::size_t begin,
                                                  std::size_t end) {
    partial_sum[b].assign(n_grid, 0.0);
    partial_sq[b].assign(n_grid, 0.0);

    std::vector<double> plus(n_grid), minus(n_grid);
    std::vector<KahanSum> acc(n_grid);
    std::vector<double> dw(1), dw_neg(1);
    BemWorkspace ws_plus, ws_minus;

    for (std::size_t s = begin; s < end; ++s) {
      GaussianStream stream = derive_stream(master_seed, s);
      for (std::size_t j = 0; j < n_grid; ++j) {
        plus[j] = table.x[j];
        minus[j] = table.x[j];
        acc[j].reset();
        // Trapezoid endpoint at t = 0; the state is still deterministic there.
        acc[j].add(0.5 * (h.value(std::span<const double>(&plus[j], 1)) - pi_h));
      }
      for (std::size_t k = 1; k <= n_t; ++k) {
        sample_increment(stream, quad_tau, dw);
        dw_neg[0] = -dw[0];
        const double w = (k == n_t) ? 0.5 : 1.0;
        for (std::size_t j = 0; j < n_grid; ++j) {
          bem_step_into(model, cfg, std::span<double>(&plus[j], 1), dw, ws_plus);
          double value = h.value(std::span<const double>(&plus[j], 1)) - pi_h;
          if (antithetic) {
            bem_step_into(model, cfg, std::span<double>(&minus[j], 1), dw_neg, ws_minus);
            value = 0.5 * (value + h.value(std::span<const double>(&minus[j], 1)) - pi_h);
          }
          acc[j].add(w * value);
        }
      }
      for (std::size_t j = 0; j < n_grid; ++j) {
        const double integral = quad_tau * acc[j].value();
        partial_sum[b][j] += integral;
        partial_sq[b][j] += integral * integral;
      }
    }
  });

  table.phi.assign(n_grid, 0.0);
  table.phi_stderr.assign(n_grid, 0.0);
  for (std::size_t j = 0; j < n_grid; ++j) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) {
      sum += partial_sum[b][j];
      sq += partial_sq[b][j];
    }
    const double n = static_cast<double>(n_streams);
    const double mean = sum / n;
    table.phi[j] = -mean;
    if (n_streams > 1) {
      const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
      table.phi_stderr[j] = std::sqrt(var / n);
    }
    if (!std::isfinite(table.phi[j])) {
      throw DiagnosticError("solve_phi: non-finite value at grid index " + std::to_string(j));
    }
  }

  table.grad_phi.assign(n_grid, 0.0);
  for (std::size_t j = 0; j < n_grid; ++j) {
    if (j == 0) {
      table.grad_phi[j] = (table.phi[1] - table.phi[0]) / dx;
    } else if (j + 1 == n_grid) {
      table.grad_phi[j] = (table.phi[j] - table.phi[j - 1]) / dx;
    } else {
      table.grad_phi[j] = (table.phi[j + 1] - table.phi[j - 1]) / (2.0 * dx);
    }
  }

  if (mixing_rate_hint > 0.0) {
    double h_scale = 0.0;
    for (std::size_t j = 0; j < n_grid; ++j) {
      h_scale = std::max(h_scale, std::abs(h.value(std::span<const double>(&table.x[j], 1)) - pi_h));
    }
    table.trunc_error_bound =
        h_scale * std::exp(-mixing_rate_hint * t_trunc) / mixing_rate_hint;
  } else {
    table.trunc_error_bound = std::numeric_limits<double>::quiet_NaN();
  }
  return table;
}

double generator_apply(const SdeModel& model, const VectorFn& f_grad, const VectorFn& f_hess,
                       std::span<const double> x) {
  if (!f_grad || !f_hess) throw ConfigError("generator_apply: gradient and Hessian required");
  const std::size_t d = static_cast<std::size_t>(model.state_dim);
  const std::size_t nd = static_cast<std::size_t>(model.noise_dim);
  std::vector<double> grad(d), hess(d * d), b(d), sig(d * nd);
  f_grad(x, grad);
  f_hess(x, hess);
  model.drift(x, b);
  model.diffusion(x, sig);
  double value = dot(grad, b);
  // 0.5 * <hess, sigma sigma^T>_HS
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      double ss = 0.0;
      for (std::size_t j = 0; j < nd; ++j) ss += sig[i * nd + j] * sig[k * nd + j];
      value += 0.5 * hess[i * d + k] * ss;
    }
  }
  return value;
}

double poisson_residual(const PoissonTable& table, const SdeModel& model, const TestFunction& h,
                        double pi_h) {
  require_scalar(model, "poisson_residual");
  const std::size_t n = table.x.size();
  if (n < 101) throw ConfigError("poisson_residual: need at least 101 grid points");
  const double dx = (table.grid.hi - table.grid.lo) / static_cast<double>(n - 1);
  double max_abs = 0.0;
  std::vector<double> b(1), sig(1);
  for (std::size_t j = 5; j + 5 < n; ++j) {
    if (j == 0 || j + 1 == n) continue;
    const double x = table.x[j];
    model.drift(std::span<const double>(&x, 1), b);
    model.diffusion(std::span<const double>(&x, 1), sig);
    const double second = (table.phi[j + 1] - 2.0 * table.phi[j] + table.phi[j - 1]) / (dx * dx);
    const double lhs = b[0] * table.grad_phi[j] + 0.5 * sig[0] * sig[0] * second;
    const double rhs = h.value(std::span<const double>(&x, 1)) - pi_h;
    max_abs = std::max(max_abs, std::abs(lhs - rhs));
  }
  return max_abs;
}

double interp_grad_phi(const PoissonTable& table, double x, std::size_t* clamp_count) {
  const std::size_t n = table.x.size();
  if (x <= table.grid.lo) {
    if (x < table.grid.lo && clamp_count) ++*clamp_count;
    return table.grad_phi.front();
  }
  if (x >= table.grid.hi) {
    if (x > table.grid.hi && clamp_count) ++*clamp_count;
    return table.grad_phi.back();
  }
  const double dx = (table.grid.hi - table.grid.lo) / static_cast<double>(n - 1);
  const double pos = (x - table.grid.lo) / dx;
  std::size_t j = static_cast<std::size_t>(pos);
  if (j >= n - 1) j = n - 2;
  const double t = pos - static_cast<double>(j);
  return (1.0 - t) * table.grad_phi[j] + t * table.grad_phi[j + 1];
}

VarianceEstimate asymptotic_variance(const SdeModel& model, const PoissonTable& table,
                                     const BemConfig& cfg, std::span<const double> x0,
                                     std::size_t n_steps, std::size_t burn_in_steps,
                                     std::uint64_t master_seed, std::size_t n_replicates,
                                     std::size_t workers) {
  require_scalar(model, "asymptotic_variance");
  validate_step_setup(model, cfg);
  if (n_replicates == 0) throw ConfigError("asymptotic_variance: need at least one replicate");
  if (n_steps < 100000) {
    throw ConfigError("asymptotic_variance: need a total budget of at least 1e5 kept steps");
  }

  const std::size_t per_replicate = n_steps / n_replicates;
  const std::size_t batches_per_replicate =
      std::max<std::size_t>(1, (30 + n_replicates - 1) / n_replicates);
  const std::size_t batch_len = per_replicate / batches_per_replicate;
  if (batch_len == 0) throw ConfigError("asymptotic_variance: replicate budget too small");
  const std::size_t kept_per_replicate = batch_len * batches_per_replicate;
  const std::size_t total_batches = n_replicates * batches_per_replicate;

  std::vector<double> batch_sum(total_batches, 0.0);
  std::vector<std::size_t> clamp_counts(n_replicates, 0);
  std::vector<double> x0_copy(x0.begin(), x0.end());

  parallel_blocks(n_replicates, 4, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    std::vector<double> sig(1);
    for (std::size_t r = begin; r < end; ++r) {
      GaussianStream stream = derive_stream(master_seed, r);
      std::size_t clamps = 0;
      KahanSum batch;
      std::size_t in_batch = 0, batch_index = r * batches_per_replicate;
      // Keeps states burn_in .. burn_in + kept - 1: with zero burn-in the
      // window starts at the initial state, matching the temporal-average
      // indexing used elsewhere.
      simulate_path(model, cfg, x0_copy, burn_in_steps + kept_per_replicate - 1, stream,
                    [&](std::size_t k, std::span<const double> x) {
                      if (k < burn_in_steps) return;
                      model.diffusion(x, sig);
                      const double g = sig[0] * interp_grad_phi(table, x[0], &clamps);
                      batch.add(g * g);
                      if (++in_batch == batch_len) {
                        batch_sum[batch_index++] = batch.value();
                        batch.reset();
                        in_batch = 0;
                      }
                    });
      clamp_counts[r] = clamps;
    }
  });

  VarianceEstimate est;
  est.method = "ergodic-average";
  est.n_batches = total_batches;
  KahanSum total;
  for (double s : batch_sum) total.add(s);
  const double kept_total = static_cast<double>(kept_per_replicate * n_replicates);
  est.value = total.value() / kept_total;
  if (total_batches > 1) {
    double ss = 0.0;
    for (double s : batch_sum) {
      const double bm = s / static_cast<double>(batch_len);
      ss += (bm - est.value) * (bm - est.value);
    }
    est.stderr_ = std::sqrt(ss / static_cast<double>(total_batches - 1) /
                            static_cast<double>(total_batches));
  }
  for (std::size_t c : clamp_counts) est.clamp_count += c;
  return est;
}

DecompositionReport clt_decomposition(const SdeModel& model, const PoissonTable& table,
                                      const BemConfig& cfg, const TestFunction& h, double pi_h,
                                      std::span<const double> x0, std::size_t n_paths,
                                      std::uint64_t master_seed, std::size_t workers) {
  require_scalar(model, "clt_decomposition");
  validate_step_setup(model, cfg);
  if (n_paths == 0) throw ConfigError("clt_decomposition: need at least one path");

  // The decomposition is stated for the deviation exponent 2: m = round(tau^-2).
  const std::size_t m = deviation_steps(cfg.tau, 2.0);
  const double sqrt_tau = std::sqrt(cfg.tau);

  DecompositionReport report;
  report.tau = cfg.tau;
  report.m = m;
  report.z_samples.assign(n_paths, 0.0);
  report.h_samples.assign(n_paths, 0.0);
  report.r_samples.assign(n_paths, 0.0);

  const std::size_t kBlock = 16;
  const std::size_t blocks = block_count(n_paths, kBlock);
  std::vector<std::size_t> clamp_partial(blocks, 0);
  const double x0v = x0[0];

  parallel_blocks(n_paths, kBlock, workers, [&](std::size_t b, std::size_t begin,
                                                std::size_t end) {
    std::vector<double> state(1), dw(1), sig(1);
    BemWorkspace ws;
    std::size_t clamps = 0;
    for (std::size_t i = begin; i < end; ++i) {
      GaussianStream stream = derive_stream(master_seed, i);
      state[0] = x0v;
      KahanSum sum_h, sum_noise;
      for (std::size_t k = 0; k < m; ++k) {
        sum_h.add(h.value(std::span<const double>(state.data(), 1)) - pi_h);
        sample_increment(stream, cfg.tau, dw);
        model.diffusion(state, sig);
        sum_noise.add(interp_grad_phi(table, state[0], &clamps) * sig[0] * dw[0]);
        try {
          bem_step_into(model, cfg, state, dw, ws);
        } catch (SolverError& err) {
          err.step_index = k;
          err.path_index = i;
          throw;
        }
      }
      const double z = (sum_h.value() / static_cast<double>(m)) / sqrt_tau;
      const double h_mart = -sqrt_tau * sum_noise.value();
      report.z_samples[i] = z;
      report.h_samples[i] = h_mart;
      report.r_samples[i] = z - h_mart;
    }
    clamp_partial[b] += clamps;
  });

  for (std::size_t c : clamp_partial) report.clamp_count += c;
  return report;
}

double grad_phi_variational(const SdeModel& model, const TestFunction& h, double x,
                            double t_trunc, double quad_tau, std::size_t n_inner_paths,
                            std::uint64_t master_seed) {
  require_scalar(model, "grad_phi_variational");
  if (!model.diffusion_jacobian) {
    throw ConfigError("grad_phi_variational: model lacks a diffusion derivative");
  }
  VectorFn h_grad = h.gradient ? h.gradient : finite_difference_gradient(h.value, 1);

  BemConfig cfg;
  cfg.tau = quad_tau;
  validate_step_setup(model, cfg);
  const std::size_t n_t = static_cast<std::size_t>(std::llround(t_trunc / quad_tau));

  std::vector<double> state(1), dw(1), grad(1), bprime(1), sprime(1);
  BemWorkspace ws;
  KahanSum outer;
  for (std::size_t s = 0; s < n_inner_paths; ++s) {
    GaussianStream stream = derive_stream(master_seed, s);
    state[0] = x;
    double eta = 1.0;
    KahanSum acc;
    h_grad(state, grad);
    acc.add(0.5 * grad[0]);  // t = 0 endpoint, eta = 1
    for (std::size_t k = 1; k <= n_t; ++k) {
      sample_increment(stream, quad_tau, dw);
      model.diffusion_jacobian(state, sprime);
      const double noise_factor = 1.0 + sprime[0] * dw[0];
      bem_step_into(model, cfg, state, dw, ws);
      // Derivative process, drift handled implicitly like the state itself.
      model.drift_jacobian(state, bprime);
      eta = eta * noise_factor / (1.0 - quad_tau * bprime[0]);
      h_grad(state, grad);
      acc.add((k == n_t ? 0.5 : 1.0) * grad[0] * eta);
    }
    outer.add(quad_tau * acc.value());
  }
  return -outer.value() / static_cast<double>(n_inner_paths);
}

std::string poisson_table_to_csv(const PoissonTable& table) {
  std::string out;
  out += "# model " + table.model_id + "\n";
  out += "# h " + table.h_id + "\n";
  out += "# pi_h " + format_double(table.pi_h_used) + "\n";
  out += "# t_trunc " + format_double(table.t_trunc) + "\n";
  out += "# quad_tau " + format_double(table.quad_tau) + "\n";
  out += "# n_inner_paths " + format_u64(table.n_inner_paths) + "\n";
  out += "# seed " + format_u64(table.seed) + "\n";
  out += "# grid_lo " + format_double(table.grid.lo) + "\n";
  out += "# grid_hi " + format_double(table.grid.hi) + "\n";
  out += "# grid_n " + format_u64(table.grid.n) + "\n";
  out += "# trunc_error_bound " + format_double(table.trunc_error_bound) + "\n";
  out += "# build " + std::string(build_id()) + "\n";
  out += "x,phi,grad_phi,phi_stderr\n";
  for (std::size_t j = 0; j < table.x.size(); ++j) {
    out += format_double(table.x[j]) + "," + format_double(table.phi[j]) + "," +
           format_double(table.grad_phi[j]) + "," + format_double(table.phi_stderr[j]) + "\n";
  }
  return out;
}

PoissonTable poisson_table_from_csv(const std::string& text) {
  PoissonTable table;
  std::istringstream in(text);
  std::string line;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key, value;
      ls >> key >> value;
      if (key == "model") table.model_id = value;
      else if (key == "h") table.h_id = value;
      else if (key == "pi_h") table.pi_h_used = std::stod(value);
      else if (key == "t_trunc") table.t_trunc = std::stod(value);
      else if (key == "quad_tau") table.quad_tau = std::stod(value);
      else if (key == "n_inner_paths") table.n_inner_paths = std::stoull(value);
      else if (key == "seed") table.seed = std::stoull(value);
      else if (key == "grid_lo") table.grid.lo = std::stod(value);
      else if (key == "grid_hi") table.grid.hi = std::stod(value);
      else if (key == "grid_n") table.grid.n = std::stoull(value);
      else if (key == "trunc_error_bound") table.trunc_error_bound = std::stod(value);
      continue;
    }
    if (!header_done) {  // column header row
      header_done = true;
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() < 3) throw ConfigError("poisson_table_from_csv: malformed row: " + line);
    table.x.push_back(row[0]);
    table.phi.push_back(row[1]);
    table.grad_phi.push_back(row[2]);
    table.phi_stderr.push_back(row.size() > 3 ? row[3] : 0.0);
  }
  if (table.x.size() != table.grid.n) {
    throw ConfigError("poisson_table_from_csv: row count does not match grid_n header");
  }
  return table;
}

}  // namespace ergodic_bem
