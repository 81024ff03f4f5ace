// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mlfuzz/certify.hpp"
#include "mlfuzz/error.hpp"
#include "mlfuzz/harness.hpp"
#include "mlfuzz/mlf.hpp"
#include "mlfuzz/solver.hpp"

using namespace mlfuzz;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string config_path(const std::string& name) { return std::string(MLFUZZ_CONFIG_DIR) + "/" + name + ".yaml"; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Scenario relaxation(double q, double T, double h, FuzzyNumber u0) {
  Scenario s;
  s.q = q;
  s.system = ScalarSystem{Expr::parse("-u")};
  s.initial = {std::move(u0)};
  s.horizon = T;
  s.step = h;
  return s;
}

Outcome ml_accuracy() {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    double err = 0.0;
    if (i % 2 == 0) {
      const double x = 10.0 * u(rng);
      const double ref = std::exp(x * x) * std::erfc(x);
      err = std::fabs(mlf::ml_one(0.5, -x) - ref) / ref;
    } else {
      const double q = 0.1 + 0.9 * u(rng);
      const double b = 0.2 + (1.8 - q) * u(rng);
      const double z = -std::pow(10.0, -2.0 + 4.0 * u(rng));
      const double lhs = mlf::ml_two(q, b, z);
      const double rhs = 1.0 / std::tgamma(b) + z * mlf::ml_two(q, b + q, z);
      err = std::fabs(lhs - rhs) / (std::fabs(lhs) + 1.0 / std::tgamma(b));
    }
    worst = std::max(worst, err);
  }
  return {worst < 1e-8, "worst relative error " + fmt("%.2e", worst) + " over 200 points"};
}

Outcome convolution_identity() {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double q = 0.1 + 0.9 * u(rng), kappa = 0.1 + 3.0 * u(rng), t = 0.1 + 10.0 * u(rng);
    // int_0^t s^(q-1) E_{q,q}(-kappa s^q) ds with r = s^q.
    auto f = [&](double r) { return mlf::ml_two(q, q, -kappa * r) / q; };
    const double quad = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::pow(t, q), 15, 1e-13);
    worst = std::max(worst, std::fabs(quad - mlf::ml_conv_integral(q, kappa, t)));
  }
  return {worst < 1e-6, "worst absolute difference " + fmt("%.2e", worst) + " over 20 draws"};
}

Outcome solver_order() {
  bool ok = true;
  std::ostringstream os;
  for (double q : {0.3, 0.5, 0.8}) {
    std::vector<double> errs;
    for (int k = 7; k <= 10; ++k) {
      const Scenario s = relaxation(q, 1.0, std::ldexp(1.0, -k), FuzzyNumber::crisp(1.0, LevelGrid::uniform(1)));
      const FuzzyTrajectory tr = solve_caputo(s);
      const FuzzyTrajectory ex = exact_linear(Eigen::MatrixXd::Constant(1, 1, -1.0), s.initial, q, tr.times);
      double e = 0.0;
      for (std::size_t i = 0; i < tr.size(); ++i) e = std::max(e, std::fabs(tr.norm[i] - ex.norm[i]));
      errs.push_back(e);
    }
    os << "q=" << q << " orders";
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double order = std::log2(errs[i - 1] / errs[i]);
      ok = ok && order >= 1.0 + q - 0.2;
      os << ' ' << fmt("%.2f", order);
    }
    os << "; ";
  }
  return {ok, os.str()};
}

// Metzler and strictly diagonally dominant, so Hurwitz and order preserving.
Eigen::MatrixXd random_metzler_hurwitz(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      A(i, j) = u(rng);
      off += A(i, j);
    }
    A(i, i) = -(off + 0.1 + 1.5 * u(rng));
  }
  return A;
}

Outcome lmi_theorem() {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int passed = 0, total = 0;
  double worst = -1.0;
  for (int n : {2, 3}) {
    for (int k = 0; k < 10; ++k) {
      Scenario s;
      s.q = 0.3 + 0.65 * u(rng);
      const Eigen::MatrixXd A = random_metzler_hurwitz(n, rng);
      s.system = LinearSystem{A};
      for (int i = 0; i < n; ++i) {
        const double m = -1.0 + 2.0 * u(rng), w = 0.5 * u(rng);
        s.initial.push_back(FuzzyNumber::triangular(m - w, m, m + w));
      }
      s.horizon = 10.0;
      s.step = 0.01;
      const FuzzyTrajectory tr = solve_caputo(s);
      const LmiCertificate c = lmi_certificate(A, s.q);
      const EnvelopeReport r = verify_envelope(tr, c.envelope(s.q, tr.norm.front()), 0.02, 1e-9);
      ++total;
      passed += r.pass ? 1 : 0;
      worst = std::max(worst, r.max_excess);
    }
  }
  bool refused = false;
  Eigen::MatrixXd bad(2, 2);
  bad << 0.0, 1.0, -1.0, 0.0;
  try {
    lmi_certificate(bad, 0.5);
  } catch (const NotHurwitz&) {
    refused = true;
  }
  return {passed == total && refused, std::to_string(passed) + "/" + std::to_string(total) +
                                          " systems inside the envelope, worst excess " + fmt("%.3f", worst) +
                                          (refused ? ", NotHurwitz control raised" : ", NotHurwitz control missed")};
}

Outcome iss_theorem() {
  const RunReport rep = run_scenario(load_config(config_path("iss")));
  const FuzzyTrajectory& tr = *rep.trajectory;
  Envelope env = iss_envelope(LyapConstants{}, tr.q, tr.norm.front(), 0.1);
  const EnvelopeReport ok = verify_envelope(tr, env);
  env.lambda *= 2.0;
  const EnvelopeReport bad = verify_envelope(tr, env);
  return {rep.status == RunStatus::Pass && ok.pass && !bad.pass,
          "demo " + std::string(to_string(rep.status)) + ", excess " + fmt("%.3f", ok.max_excess) +
              "; doubled rate gives " + std::to_string(bad.violations) + " violations"};
}

Outcome ultimate_theorem() {
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool ok = true;
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double q = 0.75 + 0.2 * u(rng), alpha = 1.0 + u(rng), g = 0.5 + 1.5 * u(rng), m = 0.5 + u(rng);
    Scenario s;
    s.q = q;
    s.system = ScalarSystem{Expr::parse("-alpha*u", {"alpha"})};
    s.param_names = {"alpha"};
    s.param_values = {alpha};
    s.disturbance = Expr::parse(fmt("%.17g", g), {"alpha"});
    s.initial = {FuzzyNumber::triangular(m - 0.1, m, m + 0.1)};
    s.horizon = 50.0;
    s.step = 0.02;
    const FuzzyTrajectory tr = solve_caputo(s);
    const double ub = ultimate_bound(alpha, 1.0, 1.0, g);
    const double ratio = tr.norm.back() / ub;
    worst = std::max(worst, ratio);
    ok = ok && tr.norm.back() <= 1.05 * ub;
  }
  return {ok, "largest terminal norm / bound " + fmt("%.4f", worst) + " over 5 draws"};
}

Outcome delay_theorem() {
  const RunReport rep = run_scenario(load_config(config_path("delay")));
  Scenario plain = relaxation(0.7, 5.0, 0.01, FuzzyNumber::triangular(0.9, 1.0, 1.1));
  Scenario delayed = plain;
  delayed.delay = DelaySpec{0.5, HistorySpec{HistorySpec::Shape::Crisp, {Expr::parse("1")}}};
  const FuzzyTrajectory a = solve_caputo(plain);
  const FuzzyTrajectory b = solve_delay(delayed);
  bool same = b.size() == a.size() + b.history_points;
  for (std::size_t i = 0; same && i < a.size(); ++i) same = a.states[i] == b.states[i + b.history_points];
  return {rep.status == RunStatus::Pass && same,
          "demo " + std::string(to_string(rep.status)) + ", excess " +
              fmt("%.3f", rep.data["verification"]["envelope"]["max_excess"].get<double>()) +
              (same ? "; degenerate delay identical" : "; degenerate delay differs")};
}

Outcome small_gain_theorem() {
  const RunReport rep = run_scenario(load_config(config_path("small_gain")));
  const auto& v = rep.data["verification"];
  const bool xy = v["x_bound"]["pass"].get<bool>() && v["y_bound"]["pass"].get<bool>();
  bool refused = false;
  try {
    small_gain(1, 1, 1, 1, 1.0, 1.0, 1, 1, 0.8);
  } catch (const GainTooLarge&) {
    refused = true;
  }
  return {xy && refused && rep.trajectory->times.back() >= 20.0,
          std::string("X/Y bounds ") + (xy ? "hold" : "violated") + " on [0, 20]" +
              (refused ? ", GainTooLarge at the boundary" : ", boundary not refused")};
}

Outcome stochastic_theorem() {
  const RunReport rep = run_scenario(load_config(config_path("stochastic")));
  const auto& e = rep.data["verification"]["envelope"];
  return {rep.status == RunStatus::Pass && rep.moments->paths == 2000,
          std::to_string(rep.moments->paths) + " paths, " + std::to_string(e["violations"].get<std::size_t>()) +
              " violations, excess " + fmt("%.3f", e["max_excess"].get<double>())};
}

Outcome converse_theorem() {
  std::vector<FuzzyNumber> samples;
  for (double v : {0.25, 0.5, 1.0, 1.5, 2.0}) samples.push_back(FuzzyNumber::crisp(v));
  bool ok = true;
  std::ostringstream os;
  for (auto [q, a, T] : {std::tuple{0.5, 1.0, 40.0}, std::tuple{0.8, 2.0, 20.0}}) {
    const ConverseResult r = converse_lyapunov(relaxation(q, T, 0.02, FuzzyNumber::crisp(1.0)), samples, T, a);
    double rise = 0.0;
    for (const auto& s : r.samples) rise = std::max(rise, s.max_increase);
    ok = ok && r.c2 / r.c1 <= 1.1 && r.nonincreasing;
    os << "q=" << q << " a=" << a << ": c2/c1 " << fmt("%.6f", r.c2 / r.c1) << ", max rise " << fmt("%.1e", rise)
       << "; ";
  }
  return {ok, os.str()};
}

Outcome determinism() {
  bool ok = true;
  for (const char* name : {"iss", "lmi", "ultimate", "delay", "small_gain", "stochastic"}) {
    const Config c = load_config(config_path(name));
    const RunReport a = run_scenario(c, {1});
    const RunReport b = run_scenario(c, {1});
    const RunReport w = run_scenario(c, {4});
    ok = ok && a.to_text() == b.to_text() && a.to_json() == b.to_json() && a.to_json() == w.to_json();
  }
  return {ok, "six demos, repeated and with 4 workers"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "Mittag-Leffler accuracy", 5.0, ml_accuracy},
      {2, "convolution identity", 10.0, convolution_identity},
      {3, "solver order", 30.0, solver_order},
      {4, "LMI certificate", 60.0, lmi_theorem},
      {5, "ML-ISS envelope", 20.0, iss_theorem},
      {6, "ultimate bound", 30.0, ultimate_theorem},
      {7, "delay envelope", 30.0, delay_theorem},
      {8, "small-gain bounds", 30.0, small_gain_theorem},
      {9, "mean-square bound", 120.0, stochastic_theorem},
      {10, "converse Lyapunov function", 60.0, converse_theorem},
      {11, "determinism", 120.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.budget;
    failures += pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s (%.2f s, budget %.0f s)\n", c.id, pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
