#include "ergodic_bem/experiments.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/ergodic.hpp"
#include "ergodic_bem/parallel.hpp"
#include "ergodic_bem/poisson.hpp"
#include "ergodic_bem/stats.hpp"
#include "ergodic_bem/version.hpp"

namespace ergodic_bem {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<double> parse_double_list(const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(std::stod(cell));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& value) {
  std::vector<int> out;
  for (double v : parse_double_list(value)) out.push_back(static_cast<int>(v));
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    throw ConfigError("key \"" + key + "\": cannot parse \"" + value + "\" as a number");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    throw ConfigError("key \"" + key + "\": cannot parse \"" + value +
                      "\" as a nonnegative integer");
  }
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "experiment") cfg.experiment = value;
  else if (key == "model") cfg.model = value;
  else if (key == "ou_theta") cfg.ou_theta = parse_double(key, value);
  else if (key == "ou_s") cfg.ou_s = parse_double(key, value);
  else if (key == "h") cfg.h = value;
  else if (key == "f") cfg.f = value;
  else if (key == "alpha") cfg.alpha = parse_double(key, value);
  else if (key == "taus") cfg.taus = parse_double_list(value);
  else if (key == "tau") cfg.tau = parse_double(key, value);
  else if (key == "tau_ref") cfg.tau_ref = parse_double(key, value);
  else if (key == "tau_fine") cfg.tau_fine = parse_double(key, value);
  else if (key == "horizon") cfg.horizon = parse_double(key, value);
  else if (key == "horizon_ref") cfg.horizon_ref = parse_double(key, value);
  else if (key == "n_paths") cfg.n_paths = parse_u64(key, value);
  else if (key == "n_ref_paths") cfg.n_ref_paths = parse_u64(key, value);
  else if (key == "x0") cfg.x0 = parse_double(key, value);
  else if (key == "y0") cfg.y0 = parse_double(key, value);
  else if (key == "x0_list") cfg.x0_list = parse_double_list(value);
  else if (key == "pi_h") cfg.pi_h = parse_double(key, value);
  else if (key == "pi_h_stderr") cfg.pi_h_stderr = parse_double(key, value);
  else if (key == "grid_lo") cfg.grid_lo = parse_double(key, value);
  else if (key == "grid_hi") cfg.grid_hi = parse_double(key, value);
  else if (key == "grid_n") cfg.grid_n = parse_u64(key, value);
  else if (key == "t_trunc") cfg.t_trunc = parse_double(key, value);
  else if (key == "quad_tau") cfg.quad_tau = parse_double(key, value);
  else if (key == "n_inner_paths") cfg.n_inner_paths = parse_u64(key, value);
  else if (key == "table_path") cfg.table_path = value;
  else if (key == "n_steps") cfg.n_steps = parse_u64(key, value);
  else if (key == "burn_in_steps") cfg.burn_in_steps = parse_u64(key, value);
  else if (key == "n_replicates") cfg.n_replicates = parse_u64(key, value);
  else if (key == "burn_in_time") cfg.burn_in_time = parse_double(key, value);
  else if (key == "reference_variance") cfg.reference_variance = parse_double(key, value);
  else if (key == "ks_threshold") cfg.ks_threshold = parse_double(key, value);
  else if (key == "p_list") cfg.p_list = parse_int_list(value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "out") cfg.out_path = value;
  else if (key == "workers") {
    if (value == "auto") cfg.workers.reset();
    else cfg.workers = static_cast<long>(parse_u64(key, value));
  } else {
    throw ConfigError("unknown configuration key \"" + key + "\"");
  }
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

SdeModel model_from_config(const ExperimentConfig& cfg) {
  return builtin_model(cfg.model, cfg.ou_theta, cfg.ou_s);
}

namespace {

std::vector<std::vector<double>> initial_values(const ExperimentConfig& cfg) {
  std::vector<std::vector<double>> out;
  if (!cfg.x0_list.empty()) {
    for (double v : cfg.x0_list) out.push_back({v});
  } else {
    out.push_back({cfg.x0});
  }
  return out;
}

// Provenance block embedded at the top of every CSV. Execution-only knobs
// (workers, output location) are deliberately excluded: two runs of the same
// configuration must produce byte-identical data files.
std::vector<std::string> fingerprint_lines(const ExperimentConfig& cfg) {
  std::vector<std::string> lines;
  auto add = [&](const std::string& k, const std::string& v) {
    lines.push_back("# " + k + " " + v);
  };
  add("experiment", cfg.experiment);
  add("model", cfg.model);
  if (cfg.model == "ou") {
    add("ou_theta", format_double(cfg.ou_theta));
    add("ou_s", format_double(cfg.ou_s));
  }
  if (!cfg.h.empty()) add("h", cfg.h);
  if (!cfg.f.empty()) add("f", cfg.f);
  add("seed", format_u64(cfg.seed));
  add("build", build_id());
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file " + path);
  out << text;
}

std::string csv_document(const ExperimentConfig& cfg, const std::string& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::string text;
  for (const auto& line : fingerprint_lines(cfg)) text += line + "\n";
  text += header + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ",";
      text += row[i];
    }
    text += "\n";
  }
  return text;
}

json config_json(const ExperimentConfig& cfg, std::size_t workers_used) {
  json j;
  j["experiment"] = cfg.experiment;
  j["model"] = cfg.model;
  j["ou_theta"] = cfg.ou_theta;
  j["ou_s"] = cfg.ou_s;
  j["h"] = cfg.h;
  j["f"] = cfg.f;
  j["alpha"] = cfg.alpha;
  j["taus"] = cfg.taus;
  j["tau"] = cfg.tau;
  j["tau_ref"] = cfg.tau_ref;
  j["tau_fine"] = cfg.tau_fine;
  j["horizon"] = cfg.horizon;
  j["horizon_ref"] = cfg.horizon_ref;
  j["n_paths"] = cfg.n_paths;
  j["n_ref_paths"] = cfg.n_ref_paths;
  j["x0"] = cfg.x0;
  j["y0"] = cfg.y0;
  j["x0_list"] = cfg.x0_list;
  if (cfg.pi_h) j["pi_h"] = *cfg.pi_h;
  j["pi_h_stderr"] = cfg.pi_h_stderr;
  j["grid_lo"] = cfg.grid_lo;
  j["grid_hi"] = cfg.grid_hi;
  j["grid_n"] = cfg.grid_n;
  j["t_trunc"] = cfg.t_trunc;
  j["quad_tau"] = cfg.quad_tau;
  j["n_inner_paths"] = cfg.n_inner_paths;
  if (!cfg.table_path.empty()) j["table_path"] = cfg.table_path;
  j["n_steps"] = cfg.n_steps;
  j["burn_in_steps"] = cfg.burn_in_steps;
  j["n_replicates"] = cfg.n_replicates;
  j["burn_in_time"] = cfg.burn_in_time;
  j["reference_variance"] = cfg.reference_variance;
  j["ks_threshold"] = cfg.ks_threshold;
  j["p_list"] = cfg.p_list;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_path;
  j["workers_used"] = workers_used;
  j["build"] = build_id();
  return j;
}

void write_outputs(const ExperimentConfig& cfg, const std::string& csv, json meta) {
  write_text(cfg.out_path + ".csv", csv);
  write_text(cfg.out_path + ".json", meta.dump(2) + "\n");
}

TestFunction h_from_config(const ExperimentConfig& cfg) {
  if (cfg.h.empty()) throw ConfigError("experiment requires a test function key h");
  return builtin_test_function(cfg.h);
}

BemConfig base_bem_config(const ExperimentConfig& cfg) {
  BemConfig bem;
  if (cfg.tau > 0.0) bem.tau = cfg.tau;
  return bem;
}

// pi(h): explicit config value, or estimated once at the fine step size across
// the configured initial values.
ErgodicLimitEstimate resolve_pi_h(const ExperimentConfig& cfg, const SdeModel& model,
                                  const TestFunction& h, std::size_t workers, json& meta) {
  if (cfg.pi_h) {
    ErgodicLimitEstimate est;
    est.value = *cfg.pi_h;
    est.stderr_ = cfg.pi_h_stderr;
    est.tau_fine = 0.0;
    meta["pi_h_source"] = "explicit";
    return est;
  }
  BemConfig fine;
  fine.tau = cfg.tau_fine;
  const ErgodicLimitEstimate est =
      estimate_ergodic_limit(model, fine, h, initial_values(cfg), cfg.horizon_ref,
                             cfg.n_ref_paths, cfg.seed ^ 0x9e3779b97f4a7c15ull, workers);
  meta["pi_h_source"] = "estimated";
  meta["pi_h_value"] = est.value;
  meta["pi_h_stderr"] = est.stderr_;
  return est;
}

// Empirical dissipativity rate, used as the decay-rate proxy in the reported
// truncation bound.
double mixing_rate_hint(const ExperimentConfig& cfg, const SdeModel& model) {
  const double radius = std::max({std::abs(cfg.grid_lo), std::abs(cfg.grid_hi), 1.0});
  const AssumptionReport rep =
      estimate_assumptions(model, 1000, radius, cfg.seed ^ 0xc1a7ull);
  return std::max(rep.c1_hat, 0.0);
}

PoissonTable resolve_table(const ExperimentConfig& cfg, const SdeModel& model,
                           const TestFunction& h, double pi_h, std::size_t workers) {
  if (!cfg.table_path.empty()) {
    std::ifstream in(cfg.table_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open table file " + cfg.table_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return poisson_table_from_csv(buffer.str());
  }
  const GridSpec grid{cfg.grid_lo, cfg.grid_hi, cfg.grid_n};
  return solve_phi(model, h, pi_h, grid, cfg.t_trunc, cfg.quad_tau, cfg.n_inner_paths, cfg.seed,
                   workers, mixing_rate_hint(cfg, model));
}

// ---- individual experiment runners ----------------------------------------

void run_ergodic_limit(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  BemConfig fine;
  fine.tau = cfg.tau > 0.0 ? cfg.tau : cfg.tau_fine;
  const auto x0s = initial_values(cfg);
  const ErgodicLimitEstimate est =
      estimate_ergodic_limit(model, fine, h, x0s, cfg.horizon, cfg.n_paths, cfg.seed, workers);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < x0s.size(); ++i) {
    rows.push_back({format_double(x0s[i][0]), format_double(est.per_x0_value[i]),
                    format_double(est.per_x0_stderr[i]), format_u64(cfg.n_paths),
                    format_double(fine.tau), format_double(cfg.horizon), format_u64(cfg.seed)});
  }
  rows.push_back({"pooled", format_double(est.value), format_double(est.stderr_),
                  format_u64(cfg.n_paths * x0s.size()), format_double(fine.tau),
                  format_double(cfg.horizon), format_u64(cfg.seed)});

  json meta = config_json(cfg, workers);
  meta["pooled_value"] = est.value;
  meta["pooled_stderr"] = est.stderr_;
  write_outputs(cfg, csv_document(cfg, "x0,value,stderr,n_paths,tau,horizon,seed", rows), meta);
}

void run_clt_table(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  if (cfg.f.empty()) throw ConfigError("clt-table requires a statistic function key f");
  const TestFunction f = builtin_test_function(cfg.f);
  if (cfg.taus.empty()) throw ConfigError("clt-table requires a descending taus list");

  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  const std::vector<double> x0{cfg.x0};
  const auto rows = clt_table(model, base_bem_config(cfg), h, f, cfg.alpha, cfg.taus, cfg.n_paths,
                              x0, pi_h, cfg.seed, workers);

  std::vector<std::vector<std::string>> csv_rows;
  json resolved_n = json::array();
  for (const auto& row : rows) {
    csv_rows.push_back({format_double(row.tau), format_double(cfg.alpha), format_u64(cfg.n_paths),
                        format_double(row.f_mean), format_double(row.f_stderr),
                        format_u64(row.n_steps), format_double(pi_h.value),
                        format_double(pi_h.stderr_), format_u64(cfg.seed)});
    resolved_n.push_back({{"tau", row.tau}, {"N", row.n_steps}});
  }
  meta["resolved_steps"] = resolved_n;
  write_outputs(cfg,
                csv_document(cfg, "tau,alpha,n_paths,f_mean,f_stderr,N_steps,pi_h_ref,pi_h_stderr,seed",
                             csv_rows),
                meta);
}

void run_deviations(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("deviations requires tau > 0");

  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  BemConfig bem = base_bem_config(cfg);
  const std::vector<double> x0{cfg.x0};
  const DeviationBatch batch =
      sample_deviations(model, bem, h, x0, cfg.alpha, cfg.n_paths, pi_h, cfg.seed, workers);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    rows.push_back({format_u64(i), format_double(batch.samples[i]), format_double(batch.tau),
                    format_double(batch.alpha), format_u64(batch.n_steps_used),
                    format_double(batch.pi_h_reference), format_double(batch.pi_h_stderr),
                    format_u64(cfg.seed)});
  }
  meta["n_steps_used"] = batch.n_steps_used;
  meta["systematic_bound"] = batch.systematic_bound;
  write_outputs(cfg,
                csv_document(cfg, "path_index,z,tau,alpha,N_steps,pi_h_ref,pi_h_stderr,seed", rows),
                meta);
}

void run_clt_ks(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("clt-ks requires tau > 0");
  if (!(cfg.reference_variance > 0.0)) {
    throw ConfigError("clt-ks requires reference_variance > 0");
  }

  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  BemConfig bem = base_bem_config(cfg);
  const std::vector<double> x0{cfg.x0};
  const DeviationBatch batch =
      sample_deviations(model, bem, h, x0, cfg.alpha, cfg.n_paths, pi_h, cfg.seed, workers);
  const KsReport ks = ks_to_normal(batch.samples, cfg.reference_variance, cfg.ks_threshold);

  std::vector<std::vector<std::string>> rows{
      {format_double(batch.tau), format_double(batch.alpha), format_u64(cfg.n_paths),
       format_double(ks.statistic), format_double(ks.pass_threshold),
       ks.passed() ? "1" : "0", format_double(ks.reference_variance),
       format_u64(batch.n_steps_used), format_u64(cfg.seed)}};
  meta["ks_statistic"] = ks.statistic;
  meta["ks_passed"] = ks.passed();
  write_outputs(
      cfg,
      csv_document(
          cfg, "tau,alpha,n_paths,ks_statistic,pass_threshold,passed,reference_variance,N_steps,seed",
          rows),
      meta);
}

void run_strong_order(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  if (cfg.taus.empty()) throw ConfigError("strong-order requires a taus list");
  if (!(cfg.tau_ref > 0.0)) throw ConfigError("strong-order requires tau_ref > 0");
  const std::vector<double> x0{cfg.x0};
  const auto points = strong_error_profile(model, BemConfig{}, cfg.taus, cfg.tau_ref, cfg.horizon,
                                           x0, cfg.n_paths, cfg.seed, workers);

  std::vector<std::pair<double, double>> fit_input;
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : points) {
    rows.push_back({format_double(p.tau), format_double(p.sup_rms_error), format_u64(cfg.n_paths),
                    format_double(cfg.tau_ref), format_double(cfg.horizon), format_u64(cfg.seed)});
    if (p.sup_rms_error > 0.0) fit_input.emplace_back(p.tau, p.sup_rms_error);
  }
  json meta = config_json(cfg, workers);
  if (fit_input.size() >= 3) {
    const OrderFit fit = fit_order(fit_input);
    meta["slope"] = fit.slope;
    meta["r_squared"] = fit.r_squared;
  }
  write_outputs(cfg,
                csv_document(cfg, "tau,sup_rms_error,n_paths,tau_ref,horizon,seed", rows), meta);
}

void run_moment_scan(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("moment-scan requires tau > 0");
  if (cfg.n_steps == 0) throw ConfigError("moment-scan requires n_steps > 0");

  BemConfig bem = base_bem_config(cfg);
  const std::size_t n = cfg.n_steps;
  const std::vector<int> ps = cfg.p_list;
  const std::size_t kBlock = 50;
  const std::size_t blocks = block_count(cfg.n_paths, kBlock);
  std::vector<std::vector<double>> partial(blocks);

  parallel_blocks(cfg.n_paths, kBlock, workers, [&](std::size_t b, std::size_t begin,
                                                    std::size_t end) {
    auto& acc = partial[b];
    acc.assign(ps.size() * (n + 1), 0.0);
    std::vector<double> x0{cfg.x0};
    for (std::size_t i = begin; i < end; ++i) {
      GaussianStream stream = derive_stream(cfg.seed, i);
      simulate_path(model, bem, x0, n, stream, [&](std::size_t k, std::span<const double> x) {
        const double a = std::abs(x[0]);
        for (std::size_t q = 0; q < ps.size(); ++q) {
          acc[q * (n + 1) + k] += std::pow(a, ps[q]);
        }
      });
    }
  });

  const std::size_t thin = std::max<std::size_t>(1, n / 1000);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t q = 0; q < ps.size(); ++q) {
    for (std::size_t k = 0; k <= n; k += thin) {
      double total = 0.0;
      for (std::size_t b = 0; b < blocks; ++b) total += partial[b][q * (n + 1) + k];
      rows.push_back({format_u64(k), std::to_string(ps[q]),
                      format_double(total / static_cast<double>(cfg.n_paths)),
                      format_u64(cfg.n_paths), format_double(bem.tau), format_u64(cfg.seed)});
    }
  }
  json meta = config_json(cfg, workers);
  meta["thinning"] = thin;
  write_outputs(cfg, csv_document(cfg, "n,p,moment,n_paths,tau,seed", rows), meta);
}

void run_contractivity(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("contractivity requires tau > 0");
  BemConfig bem = base_bem_config(cfg);
  const std::size_t n = static_cast<std::size_t>(std::llround(cfg.horizon / bem.tau));
  if (n == 0) throw ConfigError("contractivity: horizon shorter than one step");

  const std::size_t kBlock = 50;
  const std::size_t blocks = block_count(cfg.n_paths, kBlock);
  std::vector<std::vector<double>> partial(blocks);
  parallel_blocks(cfg.n_paths, kBlock, workers, [&](std::size_t b, std::size_t begin,
                                                    std::size_t end) {
    auto& acc = partial[b];
    acc.assign(n + 1, 0.0);
    std::vector<double> x0{cfg.x0}, y0{cfg.y0};
    for (std::size_t i = begin; i < end; ++i) {
      GaussianStream stream = derive_stream(cfg.seed, i);
      simulate_coupled_pair(model, bem, x0, y0, n, stream,
                            [&](std::size_t k, std::span<const double> xa,
                                std::span<const double> xb) {
                              const double d = xa[0] - xb[0];
                              acc[k] += d * d;
                            });
    }
  });

  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k <= n; ++k) {
    double total = 0.0;
    for (std::size_t b = 0; b < blocks; ++b) total += partial[b][k];
    rows.push_back({format_u64(k), format_double(total / static_cast<double>(cfg.n_paths)),
                    format_u64(cfg.n_paths), format_double(bem.tau), format_u64(cfg.seed)});
  }
  json meta = config_json(cfg, workers);
  write_outputs(cfg, csv_document(cfg, "n,mean_sq_diff,n_paths,tau,seed", rows), meta);
}

void run_bias_order(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  if (cfg.f.empty()) throw ConfigError("bias-order requires a test function key f");
  const TestFunction f = builtin_test_function(cfg.f);
  if (cfg.taus.empty()) throw ConfigError("bias-order requires a taus list");
  if (!(cfg.tau_ref > 0.0)) throw ConfigError("bias-order requires tau_ref > 0");

  double burn_in = cfg.burn_in_time;
  if (burn_in < 0.0) {
    const AssumptionReport rep = estimate_assumptions(model, 1000, 3.0, cfg.seed ^ 0xb1a5ull);
    burn_in = 3.0 / std::max(rep.c1_hat, 1e-6);
  }
  const BiasOrderResult result =
      invariant_bias_order(model, BemConfig{}, f, cfg.taus, cfg.tau_ref, cfg.horizon, cfg.n_paths,
                           cfg.seed, workers, burn_in);

  std::vector<std::vector<std::string>> rows;
  for (const auto& row : result.rows) {
    rows.push_back({format_double(row.tau), format_double(row.pi_tau), format_double(row.stderr_),
                    format_double(row.abs_bias), format_u64(cfg.n_paths), format_u64(cfg.seed)});
  }
  json meta = config_json(cfg, workers);
  meta["pi_ref"] = result.pi_ref;
  meta["pi_ref_stderr"] = result.pi_ref_stderr;
  meta["conclusive"] = result.conclusive;
  meta["burn_in_time"] = burn_in;
  if (result.fit) {
    meta["slope"] = result.fit->slope;
    meta["r_squared"] = result.fit->r_squared;
  }
  write_outputs(cfg, csv_document(cfg, "tau,pi_tau,stderr,abs_bias,n_paths,seed", rows), meta);
}

void run_poisson_solve(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  const GridSpec grid{cfg.grid_lo, cfg.grid_hi, cfg.grid_n};
  const PoissonTable table = solve_phi(model, h, pi_h.value, grid, cfg.t_trunc, cfg.quad_tau,
                                       cfg.n_inner_paths, cfg.seed, workers,
                                       mixing_rate_hint(cfg, model));
  write_text(cfg.out_path + ".csv", poisson_table_to_csv(table));
  meta["trunc_error_bound"] = table.trunc_error_bound;
  write_text(cfg.out_path + ".json", meta.dump(2) + "\n");
}

void run_poisson_check(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  const PoissonTable table = resolve_table(cfg, model, h, pi_h.value, workers);
  const double residual = poisson_residual(table, model, h, pi_h.value);
  double h_scale = 0.0;
  for (double x : table.x) {
    h_scale = std::max(h_scale,
                       std::abs(h.value(std::span<const double>(&x, 1)) - pi_h.value));
  }
  std::vector<std::vector<std::string>> rows{{format_double(residual), format_double(h_scale),
                                              format_double(residual / h_scale),
                                              format_u64(table.x.size()), format_u64(cfg.seed)}};
  meta["max_residual"] = residual;
  meta["h_scale"] = h_scale;
  write_outputs(cfg,
                csv_document(cfg, "max_residual,h_scale,relative_residual,grid_n,seed", rows),
                meta);
}

void run_variance(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("variance requires tau > 0");
  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  const PoissonTable table = resolve_table(cfg, model, h, pi_h.value, workers);
  BemConfig bem = base_bem_config(cfg);
  const std::vector<double> x0{cfg.x0};
  const VarianceEstimate est =
      asymptotic_variance(model, table, bem, x0, cfg.n_steps, cfg.burn_in_steps, cfg.seed,
                          cfg.n_replicates, workers);
  std::vector<std::vector<std::string>> rows{
      {format_double(est.value), format_double(est.stderr_), est.method,
       format_u64(est.clamp_count), format_u64(est.n_batches), format_double(bem.tau),
       format_u64(cfg.seed)}};
  meta["value"] = est.value;
  meta["stderr"] = est.stderr_;
  meta["clamp_count"] = est.clamp_count;
  write_outputs(cfg,
                csv_document(cfg, "value,stderr,method,clamp_count,n_batches,tau,seed", rows),
                meta);
}

void run_decomposition(const ExperimentConfig& cfg, std::size_t workers) {
  const SdeModel model = model_from_config(cfg);
  const TestFunction h = h_from_config(cfg);
  if (!(cfg.tau > 0.0)) throw ConfigError("decomposition requires tau > 0");
  if (cfg.alpha != 2.0) {
    throw ConfigError("decomposition is defined for alpha = 2 only");
  }
  json meta = config_json(cfg, workers);
  const ErgodicLimitEstimate pi_h = resolve_pi_h(cfg, model, h, workers, meta);
  const PoissonTable table = resolve_table(cfg, model, h, pi_h.value, workers);
  BemConfig bem = base_bem_config(cfg);
  const std::vector<double> x0{cfg.x0};
  const DecompositionReport rep = clt_decomposition(model, table, bem, h, pi_h.value, x0,
                                                    cfg.n_paths, cfg.seed, workers);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < rep.z_samples.size(); ++i) {
    rows.push_back({format_u64(i), format_double(rep.z_samples[i]),
                    format_double(rep.h_samples[i]), format_double(rep.r_samples[i]),
                    format_double(rep.tau), format_u64(cfg.seed)});
  }
  const MeanStderr h_stats = mean_stderr(rep.h_samples);
  KahanSum abs_r;
  for (double r : rep.r_samples) abs_r.add(std::abs(r));
  meta["m_steps"] = rep.m;
  meta["var_h"] = h_stats.variance;
  meta["mean_abs_r"] = abs_r.value() / static_cast<double>(rep.r_samples.size());
  meta["clamp_count"] = rep.clamp_count;
  write_outputs(cfg, csv_document(cfg, "path_index,z,h,r,tau,seed", rows), meta);
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  try {
    const std::size_t workers = resolve_workers(cfg.workers);
    if (cfg.experiment == "ergodic-limit") run_ergodic_limit(cfg, workers);
    else if (cfg.experiment == "clt-table") run_clt_table(cfg, workers);
    else if (cfg.experiment == "deviations") run_deviations(cfg, workers);
    else if (cfg.experiment == "clt-ks") run_clt_ks(cfg, workers);
    else if (cfg.experiment == "strong-order") run_strong_order(cfg, workers);
    else if (cfg.experiment == "moment-scan") run_moment_scan(cfg, workers);
    else if (cfg.experiment == "contractivity") run_contractivity(cfg, workers);
    else if (cfg.experiment == "bias-order") run_bias_order(cfg, workers);
    else if (cfg.experiment == "poisson-solve") run_poisson_solve(cfg, workers);
    else if (cfg.experiment == "poisson-check") run_poisson_check(cfg, workers);
    else if (cfg.experiment == "variance") run_variance(cfg, workers);
    else if (cfg.experiment == "decomposition") run_decomposition(cfg, workers);
    else {
      throw ConfigError("unknown experiment \"" + cfg.experiment + "\"");
    }
  } catch (const ConfigError& e) {
    if (log) *log << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    if (log) {
      json j;
      j["error"] = "solver";
      j["what"] = e.what();
      j["step_index"] = e.step_index;
      j["path_index"] = e.path_index;
      j["last_residual"] = e.last_residual;
      j["iterations"] = e.iterations;
      *log << j.dump() << "\n";
    }
    return 2;
  } catch (const DiagnosticError& e) {
    if (log) *log << "diagnostic failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace ergodic_bem
