#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "mlfuzz/expr.hpp"
#include "mlfuzz/fuzzy.hpp"

namespace mlfuzz {

// A fuzzy number whose defining values are expressions in t.
struct HistorySpec {
  enum class Shape { Crisp, Triangular };
  Shape shape = Shape::Crisp;
  std::vector<Expr> values;  // one for Crisp, (l, m, r) for Triangular

  FuzzyNumber at(double t, const LevelGrid& grid, std::span<const double> params) const;
};

struct DelaySpec {
  double tau = 0.0;
  HistorySpec history;
};

struct NoiseSpec {
  double sigma = 0.0;
  std::size_t paths = 1000;
  std::uint64_t seed = 0;
};

struct ScalarSystem {
  Expr rhs;
};

struct LinearSystem {
  Eigen::MatrixXd A;
};

// Full description of a fuzzy Caputo problem
//   D^q u = f(t, u, u(t - tau)) + g(t) (+ sigma dW/dt),  u(0) = initial.
// Every expression is parsed against param_names; param_values supplies the
// values in the same order.
struct Scenario {
  double q = 1.0;
  std::variant<ScalarSystem, LinearSystem> system = ScalarSystem{Expr::constant(0.0)};
  std::vector<FuzzyNumber> initial;
  std::optional<Expr> disturbance;
  std::optional<DelaySpec> delay;
  std::optional<NoiseSpec> noise;
  double horizon = 1.0;
  double step = 0.01;
  std::vector<std::string> param_names;
  std::vector<double> param_values;
  // Optional short-memory window (in steps) for the history sums.
  std::optional<std::size_t> memory_window;

  bool is_linear() const { return std::holds_alternative<LinearSystem>(system); }
  std::size_t dimension() const;
  const LevelGrid& grid() const;
  // Number of steps N; the last node is N*h >= horizon.
  std::size_t steps() const;

  // Throws DomainError describing the first problem found.
  void validate() const;
};

struct SolveStats {
  std::size_t steps = 0;
  std::size_t rhs_evaluations = 0;
  std::size_t newton_iterations = 0;
};

struct FuzzyTrajectory {
  double q = 1.0;
  std::vector<double> times;
  std::vector<FuzzyState> states;
  std::vector<double> norm;  // state_norm(states[i])
  // Leading nodes that belong to a delay history (times < 0).
  std::size_t history_points = 0;
  std::vector<std::string> warnings;
  SolveStats stats;

  std::size_t size() const { return times.size(); }
  std::size_t dimension() const { return states.empty() ? 0 : states.front().size(); }
};

struct MomentTrajectory {
  double q = 1.0;
  double a = 2.0;
  std::size_t paths = 0;
  std::vector<double> times;
  std::vector<double> moment;
  std::vector<double> std_error;
  std::vector<std::string> warnings;
  SolveStats stats;

  std::size_t size() const { return times.size(); }
};

// Fractional Adams-Bashforth-Moulton scheme applied to every alpha-cut
// endpoint: product-rectangle predictor and two product-trapezoid corrector
// passes. Starting weights make the first steps exact for the t^(k q)
// terms of the solution; the first nodes are solved implicitly as a block.
FuzzyTrajectory solve_caputo(const Scenario& s);

// Delayed variant; the history segment is prepended to the output.
FuzzyTrajectory solve_delay(const Scenario& s);

// Monte-Carlo estimate of E[norm^a] with additive crisp noise shared by all
// endpoints of a path. Paths are split across `workers` threads; results do
// not depend on the worker count.
MomentTrajectory solve_stochastic(const Scenario& s, double a, unsigned workers = 1);

// Reference solution of D^q x = A x through an eigendecomposition of A.
FuzzyTrajectory exact_linear(const Eigen::MatrixXd& A, std::span<const FuzzyNumber> u0, double q,
                             std::span<const double> times);

// Exponents gamma for which the starting weights make the scheme exact.
std::vector<double> starting_exponents(double q);

}  // namespace mlfuzz
