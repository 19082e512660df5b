#include "ergodic_bem/model.hpp"

#include <cmath>

#include "ergodic_bem/common.hpp"
#include "ergodic_bem/rng.hpp"

namespace ergodic_bem {

VectorFn finite_difference_jacobian(VectorFn f, int in_dim, int out_dim) {
  return [f = std::move(f), in_dim, out_dim](std::span<const double> x, std::span<double> out) {
    const std::size_t n = static_cast<std::size_t>(in_dim);
    const std::size_t m = static_cast<std::size_t>(out_dim);
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    std::vector<double> fp(m), fm(m);
    const double step = 1e-6 * std::max(1.0, norm2(x));
    for (std::size_t j = 0; j < n; ++j) {
      const double orig = x[j];
      xp[j] = orig + step;
      xm[j] = orig - step;
      f(xp, fp);
      f(xm, fm);
      for (std::size_t i = 0; i < m; ++i) out[i * n + j] = (fp[i] - fm[i]) / (2.0 * step);
      xp[j] = orig;
      xm[j] = orig;
    }
  };
}

VectorFn finite_difference_gradient(ScalarFn f, int dim) {
  return [f = std::move(f), dim](std::span<const double> x, std::span<double> out) {
    const std::size_t n = static_cast<std::size_t>(dim);
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    const double step = 1e-6 * std::max(1.0, norm2(x));
    for (std::size_t j = 0; j < n; ++j) {
      const double orig = x[j];
      xp[j] = orig + step;
      xm[j] = orig - step;
      out[j] = (f(xp) - f(xm)) / (2.0 * step);
      xp[j] = orig;
      xm[j] = orig;
    }
  };
}

SdeModel make_scalar_model(std::string name, std::function<double(double)> drift,
                           std::function<double(double)> drift_prime,
                           std::function<double(double)> diffusion,
                           std::function<double(double)> diffusion_prime, int growth_hint) {
  SdeModel m;
  m.state_dim = 1;
  m.noise_dim = 1;
  m.name = std::move(name);
  m.growth_hint = growth_hint;
  m.drift = [fn = std::move(drift)](std::span<const double> x, std::span<double> out) {
    out[0] = fn(x[0]);
  };
  if (drift_prime) {
    m.drift_jacobian = [fn = std::move(drift_prime)](std::span<const double> x,
                                                     std::span<double> out) { out[0] = fn(x[0]); };
  } else {
    m.drift_jacobian = finite_difference_jacobian(m.drift, 1, 1);
  }
  m.diffusion = [fn = std::move(diffusion)](std::span<const double> x, std::span<double> out) {
    out[0] = fn(x[0]);
  };
  if (diffusion_prime) {
    m.diffusion_jacobian = [fn = std::move(diffusion_prime)](std::span<const double> x,
                                                             std::span<double> out) {
      out[0] = fn(x[0]);
    };
  }
  return m;
}

TestFunction make_scalar_test_function(std::string name, std::function<double(double)> value,
                                       std::function<double(double)> derivative) {
  TestFunction h;
  h.name = std::move(name);
  h.value = [fn = std::move(value)](std::span<const double> x) { return fn(x[0]); };
  if (derivative) {
    h.gradient = [fn = std::move(derivative)](std::span<const double> x, std::span<double> out) {
      out[0] = fn(x[0]);
    };
  }
  return h;
}

SdeModel builtin_model(const std::string& name, double ou_theta, double ou_s) {
  if (name == "example51") {
    return make_scalar_model(
        name, [](double x) { return -(x * x * x + 8.0 * x); },
        [](double x) { return -(3.0 * x * x + 8.0); }, [](double x) { return std::sin(x); },
        [](double x) { return std::cos(x); }, 3);
  }
  if (name == "example52") {
    SdeModel m = make_scalar_model(
        name, [](double x) { return -(x * x * x + 10.0 * x); },
        [](double x) { return -(3.0 * x * x + 10.0); }, [](double x) { return 0.5 * x * x; },
        [](double x) { return x; }, 3);
    m.warning = "diffusion grows quadratically: bounded/Lipschitz diffusion checks will fail";
    return m;
  }
  if (name == "ou") {
    if (!(ou_theta > 0.0)) throw ConfigError("ou model requires theta > 0");
    if (ou_s < 0.0) throw ConfigError("ou model requires s >= 0");
    return make_scalar_model(
        name, [ou_theta](double x) { return -ou_theta * x; },
        [ou_theta](double) { return -ou_theta; }, [ou_s](double) { return ou_s; },
        [](double) { return 0.0; }, 1);
  }
  throw ConfigError("unknown model \"" + name + "\" (expected example51, example52 or ou)");
}

TestFunction builtin_test_function(const std::string& name) {
  if (name == "one") {
    return make_scalar_test_function(name, [](double) { return 1.0; }, [](double) { return 0.0; });
  }
  if (name == "x") {
    return make_scalar_test_function(name, [](double x) { return x; }, [](double) { return 1.0; });
  }
  if (name == "x2") {
    return make_scalar_test_function(name, [](double x) { return x * x; },
                                     [](double x) { return 2.0 * x; });
  }
  if (name == "x4") {
    return make_scalar_test_function(name, [](double x) { return x * x * x * x; },
                                     [](double x) { return 4.0 * x * x * x; });
  }
  if (name == "x5") {
    return make_scalar_test_function(name, [](double x) { return x * x * x * x * x; },
                                     [](double x) { return 5.0 * x * x * x * x; });
  }
  if (name == "sin_plus_one") {
    return make_scalar_test_function(name, [](double x) { return std::sin(x) + 1.0; },
                                     [](double x) { return std::cos(x); });
  }
  if (name == "cos") {
    return make_scalar_test_function(name, [](double x) { return std::cos(x); },
                                     [](double x) { return -std::sin(x); });
  }
  if (name == "sin_x6") {
    return make_scalar_test_function(
        name, [](double x) { return std::sin(std::pow(x, 6)); },
        [](double x) { return 6.0 * std::pow(x, 5) * std::cos(std::pow(x, 6)); });
  }
  throw ConfigError("unknown test function \"" + name + "\"");
}

namespace {

// Uniform point in the d-ball of radius r: normalized Gaussian direction scaled
// by r * U^(1/d).
void sample_in_ball(GaussianStream& stream, double radius, std::span<double> out) {
  const std::size_t d = out.size();
  double norm_sq = 0.0;
  for (double& v : out) {
    v = stream.next_normal();
    norm_sq += v * v;
  }
  const double norm = std::sqrt(norm_sq);
  // One more normal mapped through its CDF gives a deterministic uniform draw
  // from the same stream.
  const double u = 0.5 * std::erfc(-stream.next_normal() / std::sqrt(2.0));
  const double scale =
      norm > 0.0 ? radius * std::pow(u, 1.0 / static_cast<double>(d)) / norm : 0.0;
  for (double& v : out) v *= scale;
}

std::string point_to_string(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += format_double(x[i]);
  }
  s += ")";
  return s;
}

}  // namespace

AssumptionReport estimate_assumptions(const SdeModel& model, std::size_t n_probes,
                                      double probe_radius, std::uint64_t seed) {
  if (n_probes < 100) throw ConfigError("estimate_assumptions: need at least 100 probes");
  if (!(probe_radius > 0.0)) throw ConfigError("estimate_assumptions: probe radius must be > 0");

  const std::size_t d = static_cast<std::size_t>(model.state_dim);
  const std::size_t nd = static_cast<std::size_t>(model.noise_dim);
  GaussianStream stream = derive_stream(seed, 0);

  std::vector<double> u(d), v(d), bu(d), bv(d);
  std::vector<double> su(d * nd), sv(d * nd);
  AssumptionReport report;
  report.n_probes = n_probes;
  report.probe_radius = probe_radius;
  double c1 = std::numeric_limits<double>::infinity();
  double sup = 0.0, lip = 0.0;

  for (std::size_t k = 0; k < n_probes; ++k) {
    sample_in_ball(stream, probe_radius, u);
    sample_in_ball(stream, probe_radius, v);
    model.drift(u, bu);
    model.drift(v, bv);
    if (!all_finite(bu)) {
      throw DiagnosticError("drift is non-finite at probe point " + point_to_string(u));
    }
    if (!all_finite(bv)) {
      throw DiagnosticError("drift is non-finite at probe point " + point_to_string(v));
    }
    model.diffusion(u, su);
    model.diffusion(v, sv);

    double diff_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) diff_sq += (u[i] - v[i]) * (u[i] - v[i]);
    if (diff_sq > 1e-24) {
      double inner = 0.0;
      for (std::size_t i = 0; i < d; ++i) inner += (u[i] - v[i]) * (bu[i] - bv[i]);
      c1 = std::min(c1, -inner / diff_sq);

      double sdiff_sq = 0.0;
      for (std::size_t i = 0; i < su.size(); ++i) sdiff_sq += (su[i] - sv[i]) * (su[i] - sv[i]);
      lip = std::max(lip, std::sqrt(sdiff_sq / diff_sq));
    }
    double su_sq = 0.0, sv_sq = 0.0;
    for (std::size_t i = 0; i < su.size(); ++i) {
      su_sq += su[i] * su[i];
      sv_sq += sv[i] * sv[i];
    }
    sup = std::max({sup, std::sqrt(su_sq), std::sqrt(sv_sq)});
  }

  report.c1_hat = c1;
  report.sigma_sup_hat = sup;
  report.sigma_lip_hat = lip;
  report.dissipativity_margin_ok = c1 > 7.5 * lip * lip;
  return report;
}

}  // namespace ergodic_bem
