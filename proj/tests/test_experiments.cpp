#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/experiments.hpp"
#include "ergodic_bem/model.hpp"

using namespace ergodic_bem;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ergodic_bem_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ExperimentConfig small_table_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.experiment = "clt-table";
  cfg.model = "example51";
  cfg.h = "sin_plus_one";
  cfg.f = "cos";
  cfg.alpha = 2.0;
  cfg.taus = {0.05};
  cfg.n_paths = 64;
  cfg.x0 = 1.0;
  cfg.pi_h = 1.0;
  cfg.seed = 7;
  cfg.out_path = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("config files parse, unknown keys fail") {
  TempDir dir;
  const fs::path cfg_path = dir.path / "exp.cfg";
  {
    std::ofstream out(cfg_path);
    out << "# comment line\n";
    out << "experiment = clt-table\n";
    out << "model = example51\n";
    out << "taus = 0.05, 0.03\n";
    out << "n_paths = 128\n";
    out << "alpha = 2\n";
    out << "workers = auto\n";
  }
  const ExperimentConfig cfg = load_config_file(cfg_path.string());
  CHECK(cfg.experiment == "clt-table");
  CHECK(cfg.taus.size() == 2);
  CHECK(cfg.n_paths == 128);
  CHECK(!cfg.workers.has_value());

  ExperimentConfig cfg2;
  CHECK_THROWS_AS(apply_override(cfg2, "no_such_key", "1"), ConfigError);
}

TEST_CASE("invalid alpha is a validation failure naming the admissible range") {
  TempDir dir;
  ExperimentConfig cfg = small_table_config(dir.path / "bad_alpha");
  cfg.alpha = 0.5;
  std::ostringstream log;
  const int code = run_experiment(cfg, &log);
  CHECK(code == 1);
  CHECK(log.str().find("(1, 2]") != std::string::npos);
}

TEST_CASE("unknown experiment name is a validation failure") {
  ExperimentConfig cfg;
  cfg.experiment = "does-not-exist";
  CHECK(run_experiment(cfg, nullptr) == 1);
}

TEST_CASE("clt-table writes the documented CSV columns and is worker-independent") {
  TempDir dir;
  ExperimentConfig cfg = small_table_config(dir.path / "w1");
  cfg.workers = 1;
  REQUIRE(run_experiment(cfg, nullptr) == 0);

  ExperimentConfig cfg3 = small_table_config(dir.path / "w3");
  cfg3.workers = 3;
  REQUIRE(run_experiment(cfg3, nullptr) == 0);

  const std::string csv1 = slurp(dir.path / "w1.csv");
  const std::string csv3 = slurp(dir.path / "w3.csv");
  CHECK(csv1 == csv3);
  CHECK(csv1.find("tau,alpha,n_paths,f_mean,f_stderr,N_steps,pi_h_ref,pi_h_stderr,seed") !=
        std::string::npos);

  // Provenance: config fingerprint and build id are embedded.
  CHECK(csv1.find("# experiment clt-table") != std::string::npos);
  CHECK(csv1.find("# seed 7") != std::string::npos);
  CHECK(csv1.find("# build ") != std::string::npos);

  const std::string meta = slurp(dir.path / "w1.json");
  CHECK(meta.find("\"seed\": 7") != std::string::npos);
  CHECK(meta.find("\"build\"") != std::string::npos);
}

TEST_CASE("rerunning an experiment reproduces the CSV byte for byte") {
  TempDir dir;
  ExperimentConfig a = small_table_config(dir.path / "a");
  ExperimentConfig b = small_table_config(dir.path / "b");
  REQUIRE(run_experiment(a, nullptr) == 0);
  REQUIRE(run_experiment(b, nullptr) == 0);
  CHECK(slurp(dir.path / "a.csv") == slurp(dir.path / "b.csv"));
}

TEST_CASE("ergodic-limit experiment writes per-x0 rows and a pooled row") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.experiment = "ergodic-limit";
  cfg.model = "example51";
  cfg.h = "sin_plus_one";
  cfg.tau = 0.0009765625;
  cfg.horizon = 4.0;
  cfg.n_paths = 64;
  cfg.x0_list = {-2.0, 1.0};
  cfg.seed = 11;
  cfg.out_path = (dir.path / "limit").string();
  REQUIRE(run_experiment(cfg, nullptr) == 0);
  const std::string csv = slurp(dir.path / "limit.csv");
  CHECK(csv.find("x0,value,stderr,n_paths,tau,horizon,seed") != std::string::npos);
  CHECK(csv.find("pooled") != std::string::npos);
}

TEST_CASE("strong-order experiment records a slope in the metadata") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.experiment = "strong-order";
  cfg.model = "example51";
  cfg.taus = {0.0625, 0.03125, 0.015625};
  cfg.tau_ref = 0.001953125;  // 2^-9
  cfg.horizon = 1.0;
  cfg.n_paths = 40;
  cfg.x0 = 1.0;
  cfg.seed = 12;
  cfg.out_path = (dir.path / "order").string();
  REQUIRE(run_experiment(cfg, nullptr) == 0);
  const std::string meta = slurp(dir.path / "order.json");
  CHECK(meta.find("\"slope\"") != std::string::npos);
}

TEST_CASE("poisson-solve emits a loadable table") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.experiment = "poisson-solve";
  cfg.model = "ou";
  cfg.ou_theta = 8.0;
  cfg.ou_s = 1.0;
  cfg.h = "x";
  cfg.pi_h = 0.0;
  cfg.grid_lo = -1.0;
  cfg.grid_hi = 1.0;
  cfg.grid_n = 41;
  cfg.t_trunc = 1.5;
  cfg.quad_tau = 0.01;
  cfg.n_inner_paths = 16;
  cfg.seed = 13;
  cfg.out_path = (dir.path / "table").string();
  REQUIRE(run_experiment(cfg, nullptr) == 0);

  // A variance run can consume the emitted table directly.
  ExperimentConfig vcfg;
  vcfg.experiment = "variance";
  vcfg.model = "ou";
  vcfg.h = "x";
  vcfg.pi_h = 0.0;
  vcfg.table_path = (dir.path / "table.csv").string();
  vcfg.tau = 0.01;
  vcfg.n_steps = 100000;
  vcfg.x0 = 0.0;
  vcfg.seed = 14;
  vcfg.out_path = (dir.path / "variance").string();
  REQUIRE(run_experiment(vcfg, nullptr) == 0);
  const std::string csv = slurp(dir.path / "variance.csv");
  CHECK(csv.find("value,stderr,method") != std::string::npos);
}

TEST_CASE("clt-ks experiment verdict for the linear model") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.experiment = "clt-ks";
  cfg.model = "ou";
  cfg.ou_theta = 8.0;
  cfg.ou_s = 1.0;
  cfg.h = "x";
  cfg.pi_h = 0.0;
  cfg.alpha = 2.0;
  cfg.tau = 0.02;
  cfg.n_paths = 500;
  cfg.x0 = 0.0;
  cfg.reference_variance = 1.0 / 64.0;
  cfg.seed = 15;
  cfg.out_path = (dir.path / "ks").string();
  REQUIRE(run_experiment(cfg, nullptr) == 0);
  const std::string meta = slurp(dir.path / "ks.json");
  CHECK(meta.find("\"ks_passed\": true") != std::string::npos);
}

TEST_CASE("decomposition experiment rejects alpha != 2") {
  TempDir dir;
  ExperimentConfig cfg;
  cfg.experiment = "decomposition";
  cfg.model = "example51";
  cfg.h = "sin_plus_one";
  cfg.alpha = 1.5;
  cfg.tau = 0.05;
  cfg.out_path = (dir.path / "dec").string();
  CHECK(run_experiment(cfg, nullptr) == 1);
}

TEST_CASE("a sign-flipped drift fails the moment-plateau check") {
  // Anti-dissipative mutant of the cubic model: trajectories explode or the
  // implicit solver gives up, and the plateau criterion must report failure.
  const SdeModel mutant = make_scalar_model(
      "mutant", [](double x) { return x * x * x + 8.0 * x; },
      [](double x) { return 3.0 * x * x + 8.0; },
      [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 3);
  const CriterionResult result = criterion_moment_plateau(mutant, 99, 1);
  CHECK(!result.passed);
}
