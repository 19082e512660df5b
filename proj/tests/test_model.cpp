#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/model.hpp"
#include "ergodic_bem/rng.hpp"

using namespace ergodic_bem;

namespace {

double eval1(const VectorFn& fn, double x) {
  std::vector<double> out(1);
  const std::vector<double> in{x};
  fn(in, out);
  return out[0];
}

}  // namespace

TEST_CASE("builtin drift and diffusion values") {
  const SdeModel ex51 = builtin_model("example51");
  CHECK(eval1(ex51.drift, 1.0) == doctest::Approx(-9.0));
  CHECK(eval1(ex51.diffusion, 0.0) == 0.0);

  const SdeModel ex52 = builtin_model("example52");
  CHECK(eval1(ex52.drift, 2.0) == doctest::Approx(-28.0));
  CHECK(eval1(ex52.diffusion, 2.0) == doctest::Approx(2.0));
  CHECK(!ex52.warning.empty());

  const SdeModel ou = builtin_model("ou", 8.0, 0.5);
  CHECK(eval1(ou.drift, 2.0) == doctest::Approx(-16.0));
  CHECK(eval1(ou.diffusion, -3.0) == doctest::Approx(0.5));
}

TEST_CASE("unknown names are configuration errors") {
  CHECK_THROWS_AS(builtin_model("nope"), ConfigError);
  CHECK_THROWS_AS(builtin_test_function("nope"), ConfigError);
  CHECK_THROWS_AS(builtin_model("ou", -1.0, 1.0), ConfigError);
}

TEST_CASE("analytic Jacobians match central finite differences at random points") {
  for (const char* name : {"example51", "example52", "ou"}) {
    const SdeModel model = builtin_model(name);
    const VectorFn fd = finite_difference_jacobian(model.drift, 1, 1);
    GaussianStream s = derive_stream(7, 0);
    for (int i = 0; i < 100; ++i) {
      const double x = 3.0 * s.next_normal();
      const double analytic = eval1(model.drift_jacobian, x);
      const double numeric = eval1(fd, x);
      CHECK(std::abs(analytic - numeric) <= 1e-5 * (1.0 + std::abs(analytic)));
    }
  }
}

TEST_CASE("test-function gradients match finite differences") {
  for (const char* name : {"one", "x", "x2", "x4", "x5", "sin_plus_one", "cos", "sin_x6"}) {
    const TestFunction h = builtin_test_function(name);
    REQUIRE(h.gradient);
    const VectorFn fd = finite_difference_gradient(h.value, 1);
    GaussianStream s = derive_stream(8, 0);
    // sin(x^6) oscillates too fast beyond |x| ~ 2 for the central-difference
    // oracle itself to be accurate; probe it where the oracle is trustworthy.
    const double scale = std::string(name) == "sin_x6" ? 0.4 : 1.5;
    for (int i = 0; i < 100; ++i) {
      const double x = scale * s.next_normal();
      std::vector<double> ga(1), gn(1);
      const std::vector<double> in{x};
      h.gradient(in, ga);
      fd(in, gn);
      CHECK(std::abs(ga[0] - gn[0]) <= 1e-5 * (1.0 + std::abs(ga[0])));
    }
  }
}

TEST_CASE("assumption probing: linear drift gives the exact dissipativity constant") {
  const SdeModel ou = builtin_model("ou", 8.0, 1.0);
  const AssumptionReport rep = estimate_assumptions(ou, 500, 2.0, 42);
  CHECK(rep.c1_hat == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(rep.sigma_sup_hat == doctest::Approx(1.0));
  CHECK(rep.sigma_lip_hat == doctest::Approx(0.0));
  CHECK(rep.dissipativity_margin_ok);
}

TEST_CASE("assumption probing: cubic drift stays at least 8, sine diffusion at most 1-Lipschitz") {
  const SdeModel ex51 = builtin_model("example51");
  const AssumptionReport rep = estimate_assumptions(ex51, 10000, 3.0, 11);
  // -<u-v, b(u)-b(v)>/|u-v|^2 = 8 + u^2 + uv + v^2 >= 8 for this drift.
  CHECK(rep.c1_hat >= 8.0 - 1e-12);
  CHECK(rep.c1_hat <= 8.5);
  CHECK(rep.sigma_lip_hat <= 1.0 + 1e-9);
  CHECK(rep.dissipativity_margin_ok);
}

TEST_CASE("assumption probing flags the quadratic-diffusion model") {
  const SdeModel ex52 = builtin_model("example52");
  const AssumptionReport rep = estimate_assumptions(ex52, 5000, 3.0, 12);
  CHECK(rep.c1_hat >= 10.0 - 1e-12);
  CHECK(rep.sigma_lip_hat > 2.0);  // lipschitz estimate grows with the radius
  CHECK(!rep.dissipativity_margin_ok);
}

TEST_CASE("assumption probing is deterministic in the seed") {
  const SdeModel ex51 = builtin_model("example51");
  const AssumptionReport a = estimate_assumptions(ex51, 500, 3.0, 77);
  const AssumptionReport b = estimate_assumptions(ex51, 500, 3.0, 77);
  CHECK(a.c1_hat == b.c1_hat);
  CHECK(a.sigma_sup_hat == b.sigma_sup_hat);
  CHECK(a.sigma_lip_hat == b.sigma_lip_hat);
}

TEST_CASE("non-finite drift at a probe raises a diagnostic naming the point") {
  SdeModel bad = make_scalar_model(
      "bad", [](double) { return std::numeric_limits<double>::quiet_NaN(); },
      [](double) { return 0.0; }, [](double) { return 1.0; }, [](double) { return 0.0; }, 1);
  CHECK_THROWS_AS(estimate_assumptions(bad, 100, 1.0, 1), DiagnosticError);
}

TEST_CASE("probe-count and radius preconditions") {
  const SdeModel ou = builtin_model("ou");
  CHECK_THROWS_AS(estimate_assumptions(ou, 99, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(estimate_assumptions(ou, 100, 0.0, 1), ConfigError);
}
