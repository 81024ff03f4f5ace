#include "mlfuzz/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mlfuzz/error.hpp"
#include "mlfuzz/mlf.hpp"

namespace mlfuzz {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << name << " must be positive and finite, got " << v;
    throw DomainError(os.str());
  }
}

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << name << " must be nonnegative and finite, got " << v;
    throw DomainError(os.str());
  }
}

void require_order(double q) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("order q must lie in (0, 1]");
}

// Factor applied to both terms of an envelope when a < 1, where the root is
// no longer subadditive: (x + y)^(1/a) <= 2^(1/a - 1) (x^(1/a) + y^(1/a)).
double sub_unit_factor(double a, bool allow, std::vector<std::string>& flags) {
  if (a >= 1.0) return 1.0;
  if (!allow) {
    throw DomainError("exponent a < 1 needs the sub-unit override (the root is not subadditive)");
  }
  const double f = std::pow(2.0, 1.0 / a - 1.0);
  std::ostringstream os;
  os << "WARN: a = " << a << " < 1; constants inflated by 2^(1/a-1) = " << f;
  flags.push_back(os.str());
  return f;
}

void flag_small_overshoot(Envelope& env) {
  if (env.M < 1.0 && env.offset == 0.0) {
    std::ostringstream os;
    os << "M = " << env.M << " < 1: B(0) is below the initial norm";
    env.flags.push_back(os.str());
  }
}

}  // namespace

std::string_view to_string(EnvelopeKind kind) {
  switch (kind) {
    case EnvelopeKind::ML: return "ML";
    case EnvelopeKind::ISS: return "ISS";
    case EnvelopeKind::Ultimate: return "Ultimate";
    case EnvelopeKind::Delay: return "Delay";
    case EnvelopeKind::SmallGain: return "SmallGain";
    case EnvelopeKind::Stochastic: return "Stochastic";
  }
  return "?";
}

double Envelope::transient(double t) const {
  if (M == 0.0 || baseline == 0.0) return 0.0;
  const double e = mlf::ml_one(q, -lambda * std::pow(t, q));
  const double decay = a == 1.0 ? e : std::pow(std::max(e, 0.0), 1.0 / a);
  return M * baseline * decay;
}

double Envelope::at_running(double t, double running_sup) const {
  if (gain == 0.0) return (*this)(t);
  return transient(t) + gain * running_sup;
}

void LyapConstants::validate() const {
  require_positive(c1, "c1");
  require_positive(c2, "c2");
  require_positive(c3, "c3");
  require_positive(c4, "c4");
  require_positive(a, "a");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (c1 > c2) throw DomainError("Lyapunov bounds need c1 <= c2");
}

double scalar_comparison_solution(double w0, double kappa, double R, double q, double t) {
  require_positive(kappa, "kappa");
  require_order(q);
  if (!std::isfinite(w0) || !std::isfinite(R) || !(t >= 0.0) || !std::isfinite(t)) {
    throw DomainError("scalar comparison needs finite w0, R and t >= 0");
  }
  const double fixed = R / kappa;
  return fixed + (w0 - fixed) * mlf::ml_one(q, -kappa * std::pow(t, q));
}

Envelope iss_envelope(const LyapConstants& lc, double q, double u0_norm, double g_sup, bool allow_sub_unit) {
  lc.validate();
  require_order(q);
  require_nonnegative(u0_norm, "initial norm");
  require_nonnegative(g_sup, "sup |g|");
  Envelope env;
  env.kind = EnvelopeKind::ISS;
  env.q = q;
  env.a = lc.a;
  const double kappa = lc.kappa();
  const double f = sub_unit_factor(lc.a, allow_sub_unit, env.flags);
  env.M = f * std::pow(lc.c2 / lc.c1, 1.0 / lc.a);
  env.lambda = kappa;
  env.gain = f * std::pow(lc.c4 / (lc.c1 * kappa), 1.0 / lc.a);
  env.offset = env.gain * g_sup;
  env.baseline = u0_norm;
  flag_small_overshoot(env);
  return env;
}

double ultimate_bound(double alpha, double beta, double a, double g_sup_star) {
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  require_positive(a, "a");
  require_nonnegative(g_sup_star, "sup |g|");
  if (g_sup_star == 0.0) return 0.0;
  return std::pow(beta * g_sup_star / alpha, 1.0 / a);
}

Envelope ultimate_envelope(const LyapConstants& lc, double q, double u0_norm, double g_sup_star,
                           bool allow_sub_unit) {
  lc.validate();
  require_order(q);
  require_nonnegative(u0_norm, "initial norm");
  Envelope env;
  env.kind = EnvelopeKind::Ultimate;
  env.q = q;
  env.a = lc.a;
  const double f = sub_unit_factor(lc.a, allow_sub_unit, env.flags);
  const double ratio = std::pow(lc.c2 / lc.c1, 1.0 / lc.a);
  env.M = f * ratio;
  env.lambda = lc.kappa_rate();
  env.offset = f * ratio * ultimate_bound(lc.alpha, lc.beta, lc.a, g_sup_star);
  env.baseline = u0_norm;
  flag_small_overshoot(env);
  return env;
}

Envelope LmiCertificate::envelope(double q, double u0_norm) const {
  require_order(q);
  require_nonnegative(u0_norm, "initial norm");
  Envelope env;
  env.kind = EnvelopeKind::ML;
  env.q = q;
  env.a = a;
  env.M = M;
  env.lambda = lambda;
  env.baseline = u0_norm;
  return env;
}

LmiCertificate lmi_certificate(const Eigen::MatrixXd& A, double q, const std::optional<Eigen::MatrixXd>& P_user) {
  require_order(q);
  if (A.rows() == 0 || A.rows() != A.cols()) throw DomainError("matrix A must be square");
  if (!A.allFinite()) throw DomainError("matrix A has non-finite entries");
  const Eigen::Index n = A.rows();
  LmiCertificate cert;
  Eigen::MatrixXd P;
  if (P_user) {
    if (P_user->rows() != n || P_user->cols() != n) throw DomainError("supplied P has the wrong shape");
    if (!P_user->allFinite()) throw DomainError("supplied P has non-finite entries");
    P = 0.5 * (*P_user + P_user->transpose());
    cert.user_supplied = true;
  } else {
    // vec(A'P + PA) = (I (x) A' + A' (x) I) vec(P) for column-major vec.
    const Eigen::Index m = n * n;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
    const Eigen::MatrixXd At = A.transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(j * n, j * n, n, n) += At;
      for (Eigen::Index i = 0; i < n; ++i) K.block(i * n, j * n, n, n).diagonal().array() += At(i, j);
    }
    Eigen::VectorXd rhs = -Eigen::MatrixXd::Identity(n, n).reshaped();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      throw NotHurwitz("the Lyapunov equation A'P + PA = -I is singular (A has eigenvalues summing to zero)");
    }
    Eigen::VectorXd p = lu.solve(rhs);
    P = p.reshaped(n, n);
    P = 0.5 * (P + P.transpose()).eval();
    const double err = (At * P + P * A + Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (!std::isfinite(err) || err > 1e-8 * (1.0 + P.cwiseAbs().maxCoeff())) {
      throw NumericalError("Lyapunov solve is inaccurate (residual " + std::to_string(err) + ")");
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(P);
  if (ep.info() != Eigen::Success) throw NumericalError("eigenvalues of P did not converge");
  const double lmin = ep.eigenvalues()(0);
  const double lmax = ep.eigenvalues()(n - 1);
  if (!(lmin > 1e-12 * std::max(1.0, std::fabs(lmax)))) {
    throw NotHurwitz("P is not positive definite (smallest eigenvalue " + std::to_string(lmin) + ")");
  }
  const Eigen::MatrixXd Q = -(A.transpose() * P + P * A);
  double mu;
  if (cert.user_supplied) {
    // Largest mu with mu P <= Q: smallest eigenvalue of L^-1 Q L^-T, P = L L'.
    Eigen::LLT<Eigen::MatrixXd> llt(P);
    const Eigen::MatrixXd Li = llt.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd S = Li * Q * Li.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    mu = es.eigenvalues()(0);
    if (!(mu > 0.0)) throw NotHurwitz("supplied P does not certify decay (A'P + PA is not negative definite)");
  } else {
    mu = 1.0 / lmax;
  }
  const Eigen::MatrixXd R = -Q + mu * P;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(0.5 * (R + R.transpose()), Eigen::EigenvaluesOnly);
  cert.residual = er.eigenvalues()(n - 1);
  if (cert.residual > 1e-9 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
    throw NumericalError("LMI residual " + std::to_string(cert.residual) + " exceeds tolerance");
  }
  cert.P = P;
  cert.mu = mu;
  cert.lambda = mu;
  cert.lambda_min = lmin;
  cert.lambda_max = lmax;
  cert.M = std::sqrt(lmax / lmin);
  return cert;
}

Envelope delay_envelope(double c1, double c2, double alpha, double a, double q, double phi_sup,
                        bool allow_sub_unit) {
  require_positive(c1, "c1");
  require_positive(c2, "c2");
  require_positive(alpha, "alpha");
  require_positive(a, "a");
  require_order(q);
  require_nonnegative(phi_sup, "history sup");
  if (c1 > c2) throw DomainError("Lyapunov-Krasovskii bounds need c1 <= c2");
  Envelope env;
  env.kind = EnvelopeKind::Delay;
  env.q = q;
  env.a = a;
  env.M = sub_unit_factor(a, allow_sub_unit, env.flags) * std::pow(c2 / c1, 1.0 / a);
  env.lambda = alpha / c2;
  env.baseline = phi_sup;
  flag_small_overshoot(env);
  return env;
}

SmallGainResult small_gain(double M1, double M2, double kappa1, double kappa2, double gamma12, double gamma21,
                           double x0_norm, double y0_norm, double q) {
  require_nonnegative(M1, "M1");
  require_nonnegative(M2, "M2");
  require_positive(kappa1, "kappa1");
  require_positive(kappa2, "kappa2");
  require_nonnegative(gamma12, "gamma12");
  require_nonnegative(gamma21, "gamma21");
  require_nonnegative(x0_norm, "x0 norm");
  require_nonnegative(y0_norm, "y0 norm");
  require_order(q);
  const double loop = gamma12 * gamma21;
  if (loop >= 1.0) {
    std::ostringstream os;
    os << "small-gain condition fails: gamma12 * gamma21 = " << loop << " >= 1";
    throw GainTooLarge(os.str());
  }
  const double den = 1.0 - loop;
  SmallGainResult r;
  r.X_bound = (M1 * x0_norm + gamma12 * M2 * y0_norm) / den;
  r.Y_bound = (M2 * y0_norm + gamma21 * M1 * x0_norm) / den;
  Envelope& env = r.envelope;
  env.kind = EnvelopeKind::SmallGain;
  env.q = q;
  env.a = 1.0;
  env.M = (M1 + M2 + gamma12 * M2 + gamma21 * M1) / den;
  env.lambda = std::min(kappa1, kappa2);
  env.baseline = x0_norm + y0_norm;
  if (M1 < 1.0 || M2 < 1.0) env.flags.push_back("subsystem overshoot below 1");
  return r;
}

double stochastic_bound(double alpha, double beta, double c1, double c2, double a, double w0, double q, double t) {
  require_positive(alpha, "alpha");
  require_nonnegative(beta, "beta");
  require_positive(c1, "c1");
  require_positive(c2, "c2");
  require_positive(a, "a");
  require_nonnegative(w0, "initial E[V]");
  const double kappa = alpha / c2;
  return scalar_comparison_solution(w0, kappa, beta, q, t) / c1;
}

Envelope stochastic_envelope(double alpha, double beta, double c1, double c2, double a, double w0, double q) {
  require_positive(alpha, "alpha");
  require_nonnegative(beta, "beta");
  require_positive(c1, "c1");
  require_positive(c2, "c2");
  require_positive(a, "a");
  require_nonnegative(w0, "initial E[V]");
  require_order(q);
  const double kappa = alpha / c2;
  Envelope env;
  env.kind = EnvelopeKind::Stochastic;
  env.q = q;
  env.a = 1.0;
  env.M = 1.0 / c1;
  env.lambda = kappa;
  env.baseline = w0 - beta / kappa;
  env.offset = beta / (c1 * kappa);
  std::ostringstream os;
  os << "bounds the moment E[norm^" << a << "]";
  env.flags.push_back(os.str());
  if (env.baseline < 0.0) env.flags.push_back("initial moment below the noise floor: bound increases in t");
  return env;
}

ConverseResult converse_lyapunov(const Scenario& system, std::span<const FuzzyNumber> samples, double T_trunc,
                                 double a) {
  require_positive(T_trunc, "T_trunc");
  require_positive(a, "a");
  if (system.delay || system.noise) throw DomainError("converse construction needs a plain (undelayed, noiseless) system");
  if (system.dimension() != 1) throw DomainError("converse construction supports scalar systems");
  const double h = system.step;
  const auto m = static_cast<std::size_t>(std::llround(T_trunc / h));
  if (m < 2 || std::fabs(static_cast<double>(m) * h - T_trunc) > 1e-9 * T_trunc) {
    throw DomainError("T_trunc must be a multiple of the step (at least two steps)");
  }
  ConverseResult out;
  out.T_trunc = T_trunc;
  out.a = a;
  double c1 = std::numeric_limits<double>::infinity();
  double c2 = 0.0;
  for (const FuzzyNumber& u0 : samples) {
    ConverseSample cs;
    cs.norm0 = norm(u0);
    if (cs.norm0 == 0.0) {
      cs.V_path.assign(m + 1, 0.0);
      out.samples.push_back(std::move(cs));
      continue;
    }
    Scenario s = system;
    s.initial = {u0};
    s.horizon = 2.0 * T_trunc;
    const FuzzyTrajectory traj = solve_caputo(s);
    cs.norm_at_truncation = traj.norm[m];
    if (!(cs.norm_at_truncation < 0.1 * cs.norm0)) {
      std::ostringstream os;
      os << "decay screen failed: norm at T_trunc = " << T_trunc << " is " << cs.norm_at_truncation
         << ", not below 10% of the initial norm " << cs.norm0;
      throw ConverseNotApplicable(os.str());
    }
    std::vector<double> w(traj.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::pow(traj.norm[i], a);
    // Sliding trapezoid sum over [t_i, t_i + T_trunc].
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += 0.5 * h * (w[j] + w[j + 1]);
    cs.V_path.resize(m + 1);
    cs.V_path[0] = acc;
    for (std::size_t i = 1; i <= m; ++i) {
      acc += 0.5 * h * (w[i + m - 1] + w[i + m]) - 0.5 * h * (w[i - 1] + w[i]);
      cs.V_path[i] = acc;
    }
    cs.V = cs.V_path[0];
    for (std::size_t i = 1; i <= m; ++i) {
      cs.max_increase = std::max(cs.max_increase, (cs.V_path[i] - cs.V_path[i - 1]) / cs.V);
    }
    if (cs.max_increase > out.tolerance) out.nonincreasing = false;
    const double ratio = cs.V / std::pow(cs.norm0, a);
    c1 = std::min(c1, ratio);
    c2 = std::max(c2, ratio);
    out.samples.push_back(std::move(cs));
  }
  out.c1 = std::isfinite(c1) ? c1 : 0.0;
  out.c2 = c2;
  return out;
}

LaSalleReport lasalle_check(const FuzzyTrajectory& traj, const LyapunovFunction& V,
                            std::span<const FuzzyState> equilibria, double tol) {
  LaSalleReport r;
  r.tol = tol;
  if (traj.size() == 0) return r;
  double prev = V(traj.states[traj.history_points]);
  for (std::size_t i = traj.history_points + 1; i < traj.size(); ++i) {
    const double v = V(traj.states[i]);
    r.max_jump = std::max(r.max_jump, v - prev);
    prev = v;
  }
  r.v_limit = prev;
  r.terminal_distance = std::numeric_limits<double>::infinity();
  for (const auto& e : equilibria) {
    r.terminal_distance = std::min(r.terminal_distance, state_distance(traj.states.back(), e, GridPolicy::Resample));
  }
  r.pass = r.max_jump <= tol;
  return r;
}

}  // namespace mlfuzz
