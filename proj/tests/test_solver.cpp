#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "mlfuzz/error.hpp"
#include "mlfuzz/mlf.hpp"
#include "mlfuzz/solver.hpp"

using namespace mlfuzz;

namespace {

Scenario scalar(const std::string& rhs, double q, FuzzyNumber u0, double T, double h) {
  Scenario s;
  s.q = q;
  s.system = ScalarSystem{Expr::parse(rhs)};
  s.initial = {std::move(u0)};
  s.horizon = T;
  s.step = h;
  return s;
}

double max_error_vs_exact(double q, double h) {
  const Scenario s = scalar("-u", q, FuzzyNumber::crisp(1.0, LevelGrid::uniform(1)), 1.0, h);
  const FuzzyTrajectory tr = solve_caputo(s);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, -1.0);
  const FuzzyTrajectory ex = exact_linear(A, s.initial, q, tr.times);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) err = std::max(err, std::fabs(tr.norm[i] - ex.norm[i]));
  return err;
}

}  // namespace

TEST_CASE("zero right-hand side keeps the initial fuzzy number") {
  const auto u0 = FuzzyNumber::triangular(0.5, 1.0, 2.0);
  const FuzzyTrajectory tr = solve_caputo(scalar("0", 0.6, u0, 2.0, 0.05));
  CHECK(tr.size() == 41);
  for (const auto& s : tr.states) CHECK(s[0] == u0);
}

TEST_CASE("relaxation examples") {
  const double h = 1.0 / 512.0;
  const FuzzyTrajectory half = solve_caputo(scalar("-u", 0.5, FuzzyNumber::crisp(1.0), 1.0, h));
  CHECK(std::fabs(half.norm.back() - 0.42758357615580700441) < 2e-3);
  CHECK(std::fabs(half.norm.back() - 0.42758357615580700441) < 1e-5);
  CHECK(half.times.back() == 1.0);
  const FuzzyTrajectory one = solve_caputo(scalar("-u", 1.0, FuzzyNumber::crisp(1.0), 1.0, 0.01));
  CHECK(std::fabs(one.norm.back() - std::exp(-1.0)) < 2e-3);
}

TEST_CASE("empirical order on -u reaches 1 + q - 0.2") {
  for (double q : {0.5, 0.8}) {
    const double e1 = max_error_vs_exact(q, 1.0 / 64.0);
    const double e2 = max_error_vs_exact(q, 1.0 / 128.0);
    CAPTURE(q);
    CHECK(std::log2(e1 / e2) >= 1.0 + q - 0.2);
  }
}

TEST_CASE("starting weights make t^(k q) solutions exact") {
  // u = 1 + t^0.6 solves D^0.3 u = -u + g with g = D^0.3 u + u.
  const double c = std::tgamma(1.6) / std::tgamma(1.3);
  char g[128];
  std::snprintf(g, sizeof g, "%.17g*t^0.3 + 1 + t^0.6", c);
  Scenario s = scalar("-u", 0.3, FuzzyNumber::crisp(1.0, LevelGrid::uniform(1)), 1.0, 1.0 / 64.0);
  s.disturbance = Expr::parse(g);
  const FuzzyTrajectory tr = solve_caputo(s);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) err = std::max(err, std::fabs(tr.norm[i] - 1.0 - std::pow(tr.times[i], 0.6)));
  CHECK(err < 1e-12);
  CHECK(starting_exponents(0.3) == std::vector<double>{0.0, 0.3, 0.6, 0.8999999999999999});
  CHECK(starting_exponents(1.0) == std::vector<double>{0.0});
}

TEST_CASE("memory kernel: constant forcing integrates to c t^q / Gamma(q + 1)") {
  for (double q : {0.3, 0.7, 1.0}) {
    const FuzzyTrajectory tr = solve_caputo(scalar("2", q, FuzzyNumber::triangular(0.0, 1.0, 2.0), 3.0, 0.01));
    const double shift = 2.0 * std::pow(3.0, q) / std::tgamma(q + 1.0);
    const auto& last = tr.states.back()[0];
    CAPTURE(q);
    CHECK(last.lower()[0] == doctest::Approx(0.0 + shift).epsilon(1e-2 * 0.01));
    CHECK(last.upper()[0] == doctest::Approx(2.0 + shift).epsilon(1e-2 * 0.01));
  }
}

TEST_CASE("crisp initial data stays crisp and every node is a valid fuzzy number") {
  const FuzzyTrajectory tr = solve_caputo(scalar("-u + 0.3*sin(3*t) - 0.1*u^3", 0.7, FuzzyNumber::crisp(1.5), 5.0, 0.02));
  for (const auto& s : tr.states) {
    CHECK(s[0].is_crisp());
    CHECK_FALSE(validity_problem(s[0].lower(), s[0].upper()).has_value());
  }
  const FuzzyTrajectory fz =
      solve_caputo(scalar("-u - 0.1*u^3", 0.7, FuzzyNumber::triangular(0.5, 1.0, 1.5), 5.0, 0.02));
  for (std::size_t i = 0; i < fz.size(); ++i) {
    CHECK(fz.norm[i] == norm(fz.states[i][0]));
    CHECK_FALSE(validity_problem(fz.states[i][0].lower(), fz.states[i][0].upper()).has_value());
  }
}

TEST_CASE("order-breaking linear systems fail loudly") {
  Scenario s;
  s.q = 0.8;
  Eigen::MatrixXd A(2, 2);
  A << -1.0, -2.0, 0.0, -1.0;
  s.system = LinearSystem{A};
  s.initial = {FuzzyNumber::crisp(0.0), FuzzyNumber::triangular(0.0, 1.0, 2.0)};
  s.horizon = 1.0;
  s.step = 0.01;
  CHECK_THROWS_AS(solve_caputo(s), OrderingViolation);
}

TEST_CASE("blow-up is reported as a numerical failure") {
  CHECK_THROWS_AS(solve_caputo(scalar("u^2", 1.0, FuzzyNumber::crisp(1.0), 3.0, 0.01)), NonFiniteError);
}

TEST_CASE("scenario validation") {
  CHECK_THROWS_AS(solve_caputo(scalar("-u", 1.5, FuzzyNumber::crisp(1.0), 1.0, 0.1)), DomainError);
  CHECK_THROWS_AS(solve_caputo(scalar("-u", 0.5, FuzzyNumber::crisp(1.0), 1.0, 2.0)), DomainError);
  CHECK_THROWS_AS(solve_caputo(scalar("-u + ud", 0.5, FuzzyNumber::crisp(1.0), 1.0, 0.1)), DomainError);
}

TEST_CASE("degenerate delay reproduces the undelayed solver bit for bit") {
  Scenario plain = scalar("-u", 0.7, FuzzyNumber::triangular(0.9, 1.0, 1.1), 5.0, 0.01);
  Scenario delayed = plain;
  delayed.delay = DelaySpec{0.5, HistorySpec{HistorySpec::Shape::Crisp, {Expr::parse("1")}}};
  const FuzzyTrajectory a = solve_caputo(plain);
  const FuzzyTrajectory b = solve_delay(delayed);
  REQUIRE(b.history_points == 50);
  REQUIRE(b.size() == a.size() + 50);
  CHECK(b.times.front() == doctest::Approx(-0.5));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.states[i][0] == b.states[i + 50][0]);
    CHECK(a.norm[i] == b.norm[i + 50]);
  }
}

TEST_CASE("delay is rounded to the grid with a warning") {
  Scenario s = scalar("-u + 0.2*ud", 0.7, FuzzyNumber::crisp(1.0), 1.0, 0.01);
  s.delay = DelaySpec{0.033, HistorySpec{HistorySpec::Shape::Crisp, {Expr::parse("1")}}};
  const FuzzyTrajectory tr = solve_delay(s);
  CHECK(tr.history_points == 3);
  REQUIRE(tr.warnings.size() == 1);
  CHECK(tr.warnings[0].find("tau_eff = 0.03") != std::string::npos);
}

TEST_CASE("delayed feedback stays finite and decays") {
  Scenario s = scalar("-2*u + 0.5*ud", 0.7, FuzzyNumber::crisp(1.0), 10.0, 0.01);
  s.delay = DelaySpec{0.5, HistorySpec{HistorySpec::Shape::Crisp, {Expr::parse("1")}}};
  const FuzzyTrajectory tr = solve_delay(s);
  for (double v : tr.norm) CHECK(std::isfinite(v));
  CHECK(tr.norm.back() < 0.1);
}

TEST_CASE("noiseless Monte Carlo equals the deterministic solve") {
  Scenario s = scalar("-u", 0.6, FuzzyNumber::triangular(0.5, 1.0, 1.5), 2.0, 0.02);
  const FuzzyTrajectory det = solve_caputo(s);
  s.noise = NoiseSpec{0.0, 50, 1};
  const MomentTrajectory m = solve_stochastic(s, 2.0);
  REQUIRE(m.size() == det.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m.moment[i] == std::pow(det.norm[i], 2.0));
    CHECK(m.std_error[i] == 0.0);
  }
}

TEST_CASE("Monte Carlo is deterministic for a seed and independent of the worker count") {
  Scenario s = scalar("-u", 0.5, FuzzyNumber::crisp(1.0, LevelGrid::uniform(1)), 1.0, 0.02);
  s.noise = NoiseSpec{0.1, 200, 42};
  const MomentTrajectory a = solve_stochastic(s, 2.0, 1);
  const MomentTrajectory b = solve_stochastic(s, 2.0, 1);
  const MomentTrajectory c = solve_stochastic(s, 2.0, 3);
  CHECK(a.moment == b.moment);
  CHECK(a.std_error == b.std_error);
  CHECK(a.moment == c.moment);
  s.noise->seed = 43;
  CHECK(solve_stochastic(s, 2.0).moment != a.moment);
  for (std::size_t i = 1; i < a.size(); ++i) {
    CHECK(a.moment[i] >= 0.0);
    CHECK(a.std_error[i] > 0.0);
  }
}

TEST_CASE("additive noise preserves the fuzzy diameter") {
  // The diameter of each path equals the noiseless diameter, so E[diam] does
  // not depend on sigma: check through the moment of order 1 of a symmetric
  // number whose norm splits into centre and half-width.
  Scenario s = scalar("-u", 0.8, FuzzyNumber::triangular(9.0, 10.0, 11.0, LevelGrid::uniform(1)), 1.0, 0.05);
  s.noise = NoiseSpec{0.01, 100, 5};
  const MomentTrajectory m = solve_stochastic(s, 1.0);
  s.noise->sigma = 0.0;
  const MomentTrajectory d = solve_stochastic(s, 1.0);
  // Norm = centre + half-width while the number stays positive; the centre
  // has mean equal to the noiseless centre because the noise is additive.
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.moment[i] == doctest::Approx(d.moment[i]).epsilon(5e-3));
}

TEST_CASE("exact linear reference") {
  const std::vector<FuzzyNumber> one{FuzzyNumber::crisp(1.0)};
  const std::vector<double> t1{1.0};
  const FuzzyTrajectory a = exact_linear(Eigen::MatrixXd::Constant(1, 1, -1.0), one, 0.5, t1);
  CHECK(a.norm[0] == doctest::Approx(0.42758357615).epsilon(1e-11));
  const std::vector<FuzzyNumber> tri{FuzzyNumber::triangular(0.0, 1.0, 2.0)};
  const std::vector<double> ts{0.0, 0.5, 3.0};
  const FuzzyTrajectory z = exact_linear(Eigen::MatrixXd::Zero(1, 1), tri, 0.7, ts);
  for (const auto& s : z.states) CHECK(hausdorff(s[0], tri[0]) < 1e-15);
  Eigen::MatrixXd D(2, 2);
  D << -1.0, 0.0, 0.0, -2.0;
  const std::vector<FuzzyNumber> two{FuzzyNumber::crisp(1.0), FuzzyNumber::crisp(1.0)};
  const FuzzyTrajectory d = exact_linear(D, two, 1.0, t1);
  CHECK(d.states[0][0].lower()[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-13));
  CHECK(d.states[0][1].lower()[0] == doctest::Approx(std::exp(-2.0)).epsilon(1e-13));
  Eigen::MatrixXd R(2, 2);
  R << 0.0, 1.0, -1.0, 0.0;
  CHECK_THROWS_AS(exact_linear(R, two, 0.5, t1), UnsupportedMatrix);
  Eigen::MatrixXd J(2, 2);
  J << -1.0, 1.0, 0.0, -1.0;
  CHECK_THROWS_AS(exact_linear(J, two, 0.5, t1), UnsupportedMatrix);
}

TEST_CASE("linear solver agrees with the exact reference for a coupled Metzler system") {
  Scenario s;
  s.q = 0.8;
  Eigen::MatrixXd A(2, 2);
  A << -1.0, 0.4, 0.4, -1.0;
  s.system = LinearSystem{A};
  s.initial = {FuzzyNumber::triangular(0.8, 1.0, 1.2), FuzzyNumber::triangular(0.4, 0.5, 0.6)};
  s.horizon = 5.0;
  s.step = 0.01;
  const FuzzyTrajectory tr = solve_caputo(s);
  const FuzzyTrajectory ex = exact_linear(A, s.initial, s.q, tr.times);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) err = std::max(err, state_distance(tr.states[i], ex.states[i]));
  CHECK(err < 1e-4);
}
