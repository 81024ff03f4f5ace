#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mlfuzz/fuzzy.hpp"
#include "mlfuzz/solver.hpp"

namespace mlfuzz {

enum class EnvelopeKind { ML, ISS, Ultimate, Delay, SmallGain, Stochastic };

std::string_view to_string(EnvelopeKind kind);

// B(t) = M * baseline * E_q(-lambda t^q)^(1/a) + offset.
//
// `gain` is nonzero for input-driven envelopes: the offset equals
// gain * sup |g| over the whole horizon, and at_running() replaces it by
// gain times the running supremum of |g| on [0, t].
struct Envelope {
  EnvelopeKind kind = EnvelopeKind::ML;
  double q = 1.0;
  double a = 1.0;
  double M = 1.0;
  double lambda = 0.0;
  double offset = 0.0;
  double baseline = 0.0;
  double gain = 0.0;
  std::vector<std::string> flags;

  // M * baseline * E_q(-lambda t^q)^(1/a).
  double transient(double t) const;
  double operator()(double t) const { return transient(t) + offset; }
  double at_running(double t, double running_sup) const;
};

struct LyapConstants {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double c4 = 1.0;
  double a = 1.0;
  double alpha = 1.0;
  double beta = 1.0;

  // Throws DomainError unless every constant is positive and c1 <= c2.
  void validate() const;
  double kappa() const { return c3 / c2; }
  double kappa_rate() const { return alpha / c2; }
};

struct LmiCertificate {
  Eigen::MatrixXd P;
  double mu = 0.0;
  double M = 1.0;
  double lambda = 0.0;
  double a = 2.0;
  double lambda_min = 0.0;  // eigenvalues of P
  double lambda_max = 0.0;
  double residual = 0.0;    // largest eigenvalue of A'P + PA + mu P
  bool user_supplied = false;

  Envelope envelope(double q, double u0_norm) const;
};

// w0 E_q(-kappa t^q) + (R / kappa)(1 - E_q(-kappa t^q)), the solution of
// D^q y = -kappa y + R, y(0) = w0.
double scalar_comparison_solution(double w0, double kappa, double R, double q, double t);

// Set allow_sub_unit to accept a < 1; the constants are then inflated by
// 2^(1/a - 1) and the envelope carries a WARN flag.
Envelope iss_envelope(const LyapConstants& lc, double q, double u0_norm, double g_sup, bool allow_sub_unit = false);

double ultimate_bound(double alpha, double beta, double a, double g_sup_star);

// Transient envelope that settles at (c2/c1)^(1/a) * ultimate_bound.
Envelope ultimate_envelope(const LyapConstants& lc, double q, double u0_norm, double g_sup_star,
                           bool allow_sub_unit = false);

// Solves A'P + PA = -I (or checks a supplied P) and takes the largest
// admissible mu. Throws NotHurwitz when P is not positive definite.
LmiCertificate lmi_certificate(const Eigen::MatrixXd& A, double q,
                               const std::optional<Eigen::MatrixXd>& P = std::nullopt);

Envelope delay_envelope(double c1, double c2, double alpha, double a, double q, double phi_sup,
                        bool allow_sub_unit = false);

struct SmallGainResult {
  double X_bound = 0.0;
  double Y_bound = 0.0;
  Envelope envelope;
};

// Throws GainTooLarge when gamma12 * gamma21 >= 1.
SmallGainResult small_gain(double M1, double M2, double kappa1, double kappa2, double gamma12, double gamma21,
                           double x0_norm, double y0_norm, double q);

double stochastic_bound(double alpha, double beta, double c1, double c2, double a, double w0, double q, double t);

// The same bound in envelope form (exponent 1 on E_q); it bounds the moment
// E[norm^a], not the norm.
Envelope stochastic_envelope(double alpha, double beta, double c1, double c2, double a, double w0, double q);

struct ConverseSample {
  double norm0 = 0.0;
  double V = 0.0;
  double norm_at_truncation = 0.0;
  // V along the trajectory, V(u(t_i)) for t_i in [0, T_trunc].
  std::vector<double> V_path;
  double max_increase = 0.0;  // largest V(u(t_{i+1})) - V(u(t_i)), relative to V
};

struct ConverseResult {
  double T_trunc = 0.0;
  double a = 1.0;
  std::vector<ConverseSample> samples;
  double c1 = 0.0;
  double c2 = 0.0;
  double tolerance = 1e-6;
  bool nonincreasing = true;
};

// V(u0) = int_0^T norm(u(s; u0))^a ds on the solver grid, with V along a
// trajectory read off by shifting the integration window. Throws
// ConverseNotApplicable when some sample has not decayed below 10% of its
// initial norm by T_trunc.
ConverseResult converse_lyapunov(const Scenario& system, std::span<const FuzzyNumber> samples, double T_trunc,
                                 double a);

struct LaSalleReport {
  double max_jump = 0.0;
  double terminal_distance = 0.0;
  double v_limit = 0.0;
  double tol = 0.0;
  bool pass = false;
};

using LyapunovFunction = std::function<double(const FuzzyState&)>;

LaSalleReport lasalle_check(const FuzzyTrajectory& traj, const LyapunovFunction& V,
                            std::span<const FuzzyState> equilibria, double tol);

}  // namespace mlfuzz
