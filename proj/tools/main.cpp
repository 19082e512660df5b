// Command-line front end: one subcommand per experiment plus the verification
// suites. Configuration comes from an optional flat key=value file; flags
// override file keys.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/experiments.hpp"
#include "ergodic_bem/parallel.hpp"
#include "ergodic_bem/version.hpp"

namespace {

using ergodic_bem::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed, out, workers, model, h, f, alpha, tau, tau_ref, horizon, paths, x0, taus;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->set_help_flag("--help", "print help");  // frees -h for the test-function flag
  cmd->add_option("--config", flags.config_path, "flat key = value config file");
  cmd->add_option("--set", flags.overrides, "extra key=value override (repeatable)");
  cmd->add_option("--seed", flags.seed, "master seed");
  cmd->add_option("--out", flags.out, "output path stem (writes <out>.csv and <out>.json)");
  cmd->add_option("--workers", flags.workers, "worker count or 'auto'");
  cmd->add_option("--model", flags.model, "model id (example51, example52, ou)");
  cmd->add_option("-h,--h", flags.h, "test function id");
  cmd->add_option("-f,--f", flags.f, "statistic function id");
  cmd->add_option("--alpha", flags.alpha, "deviation exponent in (1,2]");
  cmd->add_option("--tau", flags.tau, "step size");
  cmd->add_option("--tau-ref", flags.tau_ref, "reference step size");
  cmd->add_option("--horizon", flags.horizon, "time horizon");
  cmd->add_option("--paths", flags.paths, "number of Monte Carlo paths");
  cmd->add_option("--x0", flags.x0, "initial value");
  cmd->add_option("--taus", flags.taus, "comma-separated step sizes");
}

int apply_and_run(const std::string& experiment, const CommonFlags& flags) {
  try {
    ExperimentConfig cfg = flags.config_path.empty()
                               ? ExperimentConfig{}
                               : ergodic_bem::load_config_file(flags.config_path);
    if (!cfg.experiment.empty() && cfg.experiment != experiment) {
      throw ergodic_bem::ConfigError("config file is for experiment \"" + cfg.experiment +
                                     "\" but subcommand is \"" + experiment + "\"");
    }
    cfg.experiment = experiment;
    auto set = [&cfg](const std::string& key, const std::string& value) {
      if (!value.empty()) ergodic_bem::apply_override(cfg, key, value);
    };
    set("seed", flags.seed);
    set("out", flags.out);
    set("workers", flags.workers);
    set("model", flags.model);
    set("h", flags.h);
    set("f", flags.f);
    set("alpha", flags.alpha);
    set("tau", flags.tau);
    set("tau_ref", flags.tau_ref);
    set("horizon", flags.horizon);
    set("n_paths", flags.paths);
    set("x0", flags.x0);
    set("taus", flags.taus);
    for (const std::string& kv : flags.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ergodic_bem::ConfigError("--set expects key=value, got \"" + kv + "\"");
      }
      ergodic_bem::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return ergodic_bem::run_experiment(cfg, &std::cerr);
  } catch (const ergodic_bem::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backward Euler-Maruyama ergodic-average toolkit"};
  app.set_version_flag("--version", std::string(ergodic_bem::build_id()));
  app.require_subcommand(1);

  const std::vector<std::string> experiments{
      "ergodic-limit", "clt-table",  "deviations",    "clt-ks",   "strong-order", "moment-scan",
      "contractivity", "bias-order", "poisson-solve", "poisson-check", "variance",
      "decomposition"};

  std::vector<CommonFlags> flag_sets(experiments.size());
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    CLI::App* cmd = app.add_subcommand(experiments[i], "run the " + experiments[i] + " experiment");
    add_common_flags(cmd, flag_sets[i]);
  }

  std::string suite_name = "properties";
  std::string suite_seed = "2026";
  std::string suite_workers;
  std::string suite_out;
  CLI::App* suite = app.add_subcommand("suite", "run a verification suite");
  suite->add_option("name", suite_name, "properties | paper-figures | paper-tables | all");
  suite->add_option("--seed", suite_seed, "master seed");
  suite->add_option("--workers", suite_workers, "worker count or 'auto'");
  suite->add_option("--out", suite_out, "optional CSV verdict output stem");

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < experiments.size(); ++i) {
    if (app.got_subcommand(experiments[i])) {
      return apply_and_run(experiments[i], flag_sets[i]);
    }
  }

  if (app.got_subcommand("suite")) {
    try {
      std::optional<long> workers_req;
      if (!suite_workers.empty() && suite_workers != "auto") {
        workers_req = std::stol(suite_workers);
      }
      const std::size_t workers = ergodic_bem::resolve_workers(workers_req);
      const auto results = ergodic_bem::run_acceptance_suite(
          suite_name, std::stoull(suite_seed), workers, &std::cout);
      bool all_passed = true;
      for (const auto& res : results) all_passed = all_passed && res.passed;
      if (!suite_out.empty()) {
        std::string csv = "# suite " + suite_name + "\n# seed " + suite_seed + "\n# build " +
                          std::string(ergodic_bem::build_id()) + "\n";
        csv += "criterion,name,passed,seconds,detail\n";
        for (const auto& res : results) {
          std::string detail = res.detail;
          for (char& c : detail) {
            if (c == ',') c = ';';
          }
          csv += std::to_string(res.index) + "," + res.name + "," + (res.passed ? "1" : "0") +
                 "," + ergodic_bem::format_double(res.seconds) + "," + detail + "\n";
        }
        std::ofstream out(suite_out + ".csv", std::ios::binary);
        out << csv;
      }
      return all_passed ? 0 : 3;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
