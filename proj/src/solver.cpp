#include "mlfuzz/solver.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <boost/math/special_functions/gamma.hpp>

#include "mlfuzz/error.hpp"
#include "mlfuzz/mlf.hpp"

namespace mlfuzz {

namespace {

using ld = long double;

constexpr double kOrderingTolerance = 1e-12;
constexpr double kBlowUp = 1e150;
constexpr std::size_t kMaxStartingExponents = 4;

std::string fmt_time(double t) {
  std::ostringstream os;
  os.precision(6);
  os << t;
  return os.str();
}

// ---------------------------------------------------------------------------
// Quadrature weights.

struct Weights {
  double q = 1.0;
  std::size_t N = 0;
  std::size_t s = 0;       // starting nodes t_1..t_s
  double cp = 0.0;         // 1 / Gamma(q + 1)
  double cc = 0.0;         // 1 / Gamma(q + 2)
  std::vector<double> a;   // corrector, a[k] for j = n - k
  std::vector<double> a0;  // corrector weight of node 0 for target n + 1
  std::vector<double> b;   // predictor, b[k] for j = n - k
  std::vector<double> wp;  // starting weights, row n (target n + 1), s entries
  std::vector<double> wc;
};

ld powl_int(ld base, ld ex) {
  if (base == 0.0L) return ex == 0.0L ? 1.0L : 0.0L;
  return std::pow(base, ex);
}

Weights make_weights(double q, std::size_t N) {
  Weights w;
  w.q = q;
  w.N = N;
  const ld Q = q;
  w.cp = static_cast<double>(1.0L / boost::math::tgamma(Q + 1.0L));
  w.cc = static_cast<double>(1.0L / boost::math::tgamma(Q + 2.0L));

  std::vector<ld> A(N + 1);
  std::vector<ld> A0(N + 1);
  std::vector<ld> B(N + 1);
  for (std::size_t k = 0; k <= N; ++k) {
    const ld K = static_cast<ld>(k);
    A[k] = powl_int(K + 2, Q + 1) + powl_int(K, Q + 1) - 2 * powl_int(K + 1, Q + 1);
    A0[k] = powl_int(K, Q + 1) - (K - Q) * powl_int(K + 1, Q);
    B[k] = powl_int(K + 1, Q) - powl_int(K, Q);
  }
  w.a.assign(A.begin(), A.end());
  w.a0.assign(A0.begin(), A0.end());
  w.b.assign(B.begin(), B.end());

  std::vector<double> gammas = starting_exponents(q);
  // Constants need no correction.
  const bool trivial = gammas.size() <= 1;
  while (gammas.size() > N) gammas.pop_back();
  const std::size_t ng = gammas.size();
  w.s = trivial ? 0 : ng;
  if (w.s == 0) return w;
  const std::size_t s = w.s;

  using MatL = Eigen::Matrix<ld, Eigen::Dynamic, Eigen::Dynamic>;
  using VecL = Eigen::Matrix<ld, Eigen::Dynamic, 1>;
  MatL V(ng, s);
  for (std::size_t i = 0; i < ng; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          powl_int(static_cast<ld>(k + 1), static_cast<ld>(gammas[i]));
    }
  }
  const auto lu = V.fullPivLu();

  // Powers j^gamma for every exponent and node.
  std::vector<std::vector<ld>> pw(ng, std::vector<ld>(N + 1));
  std::vector<ld> exact_coef(ng);
  for (std::size_t i = 0; i < ng; ++i) {
    const ld g = gammas[i];
    for (std::size_t j = 0; j <= N; ++j) pw[i][j] = powl_int(static_cast<ld>(j), g);
    exact_coef[i] = boost::math::tgamma(g + 1) / boost::math::tgamma(g + 1 + Q);
  }
  const ld cp = 1.0L / boost::math::tgamma(Q + 1.0L);
  const ld cc = 1.0L / boost::math::tgamma(Q + 2.0L);

  w.wp.assign(N * s, 0.0);
  w.wc.assign(N * s, 0.0);
  VecL rp(ng);
  VecL rc(ng);
  for (std::size_t n = 0; n < N; ++n) {
    const ld target = static_cast<ld>(n + 1);
    for (std::size_t i = 0; i < ng; ++i) {
      const auto& p = pw[i];
      ld sp = 0.0L;
      ld sc = A0[n] * p[0] + p[n + 1];
      for (std::size_t j = 0; j <= n; ++j) sp += B[n - j] * p[j];
      for (std::size_t j = 1; j <= n; ++j) sc += A[n - j] * p[j];
      const ld exact = exact_coef[i] * powl_int(target, static_cast<ld>(gammas[i]) + Q);
      rp(static_cast<Eigen::Index>(i)) = exact - cp * sp;
      rc(static_cast<Eigen::Index>(i)) = exact - cc * sc;
    }
    const VecL xp = lu.solve(rp);
    const VecL xc = lu.solve(rc);
    for (std::size_t k = 0; k < s; ++k) {
      w.wp[n * s + k] = static_cast<double>(xp(static_cast<Eigen::Index>(k)));
      w.wc[n * s + k] = static_cast<double>(xc(static_cast<Eigen::Index>(k)));
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// PECE engine over a flat state of `dim` doubles made of independent groups
// of `group` coupled entries.

using RhsFn = std::function<void(double t, const double* x, const double* xd, double* out)>;
using CheckFn = std::function<void(std::size_t index, const double* x)>;

struct EngineSetup {
  double h = 0.01;
  std::size_t dim = 1;
  std::size_t group = 1;
  std::size_t delay_steps = 0;  // 0: no delay
  std::optional<std::size_t> window;
};

class Engine {
 public:
  Engine(const Weights& w, EngineSetup setup)
      : w_(w), st_(setup), hq_(std::pow(setup.h, w.q)), F_((w.N + 1) * setup.dim) {}

  // X holds (N + 1) * dim values with node 0 filled in. hist holds the
  // delay_steps nodes before t = 0, oldest first. noise, when non-null,
  // holds an additive term per node.
  void run(const RhsFn& f, double* X, const double* hist, const double* noise, const CheckFn& check,
           SolveStats& stats) {
    X_ = X;
    hist_ = hist;
    noise_ = noise;
    f_ = &f;
    stats_ = &stats;
    const std::size_t N = w_.N;
    const std::size_t dim = st_.dim;
    eval(0, X_, delayed(0, nullptr), F_.data());
    const std::size_t s = std::min(w_.s, N);
    if (s > 0) {
      solve_block(s);
      for (std::size_t k = 1; k <= s; ++k) check(k, X_ + k * dim);
    }
    std::vector<double> accP(dim), accC(dim), P(dim), Fp(dim);
    for (std::size_t n = s; n < N; ++n) {
      history_sums(n, F_.data(), accP.data(), accC.data());
      const double* nz = noise_ ? noise_ + (n + 1) * dim : nullptr;
      for (std::size_t d = 0; d < dim; ++d) {
        P[d] = X_[d] + hq_ * (w_.cp * accP[d]) + (nz ? nz[d] : 0.0);
      }
      add_starting(n, F_.data(), P.data(), /*predictor=*/true);
      eval(n + 1, P.data(), delayed(n + 1, nullptr), Fp.data());
      double* Xn = X_ + (n + 1) * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        Xn[d] = X_[d] + hq_ * (w_.cc * (accC[d] + Fp[d])) + (nz ? nz[d] : 0.0);
      }
      add_starting(n, F_.data(), Xn, /*predictor=*/false);
      // Second corrector pass.
      eval(n + 1, Xn, delayed(n + 1, nullptr), Fp.data());
      for (std::size_t d = 0; d < dim; ++d) {
        Xn[d] = X_[d] + hq_ * (w_.cc * (accC[d] + Fp[d])) + (nz ? nz[d] : 0.0);
      }
      add_starting(n, F_.data(), Xn, /*predictor=*/false);
      check(n + 1, Xn);
      eval(n + 1, Xn, delayed(n + 1, nullptr), F_.data() + (n + 1) * dim);
      stats.steps += 1;
    }
  }

 private:
  double time(std::size_t n) const { return static_cast<double>(n) * st_.h; }

  void eval(std::size_t n, const double* x, const double* xd, double* out) {
    (*f_)(time(n), x, xd, out);
    stats_->rhs_evaluations += 1;
  }

  // Delayed state for node n; `block` substitutes the block iterate for
  // nodes 1..s while it is being solved.
  const double* delayed(std::size_t n, const double* block) const {
    if (st_.delay_steps == 0) return nullptr;
    const std::size_t dim = st_.dim;
    const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(n) - static_cast<std::ptrdiff_t>(st_.delay_steps);
    if (idx < 0) return hist_ + static_cast<std::size_t>(idx + static_cast<std::ptrdiff_t>(st_.delay_steps)) * dim;
    if (idx == 0 || block == nullptr) return X_ + static_cast<std::size_t>(idx) * dim;
    return block + static_cast<std::size_t>(idx - 1) * dim;
  }

  // Predictor and corrector history sums for target n + 1 (excluding the
  // new node and the starting-weight terms).
  void history_sums(std::size_t n, const double* F, double* accP, double* accC) const {
    const std::size_t dim = st_.dim;
    std::size_t lo = 1;
    if (st_.window && n + 1 > *st_.window) lo = n + 1 - *st_.window;
    const double b0 = w_.b[n];
    const double a0 = w_.a0[n];
    for (std::size_t d = 0; d < dim; ++d) {
      accP[d] = b0 * F[d];
      accC[d] = a0 * F[d];
    }
    for (std::size_t j = lo; j <= n; ++j) {
      const double bj = w_.b[n - j];
      const double aj = w_.a[n - j];
      const double* Fj = F + j * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        accP[d] += bj * Fj[d];
        accC[d] += aj * Fj[d];
      }
    }
  }

  void add_starting(std::size_t n, const double* F, double* out, bool predictor) const {
    if (w_.s == 0) return;
    const std::size_t dim = st_.dim;
    const double* wrow = (predictor ? w_.wp.data() : w_.wc.data()) + n * w_.s;
    for (std::size_t k = 1; k <= w_.s; ++k) {
      const double c = hq_ * wrow[k - 1];
      const double* Fk = F + k * dim;
      for (std::size_t d = 0; d < dim; ++d) out[d] += c * Fk[d];
    }
  }

  // Implicit corrector over nodes 1..s with F_1..F_s taken from the iterate
  // U; writes the new values into out.
  void block_map(std::size_t s, const double* U, double* out) {
    const std::size_t dim = st_.dim;
    std::vector<double>& Fb = block_F_;
    Fb.assign((s + 1) * dim, 0.0);
    std::copy(F_.begin(), F_.begin() + static_cast<std::ptrdiff_t>(dim), Fb.begin());
    for (std::size_t k = 1; k <= s; ++k) eval(k, U + (k - 1) * dim, delayed(k, U), Fb.data() + k * dim);
    std::vector<double> accP(dim), accC(dim);
    for (std::size_t n = 0; n < s; ++n) {
      history_sums(n, Fb.data(), accP.data(), accC.data());
      const double* nz = noise_ ? noise_ + (n + 1) * dim : nullptr;
      const double* Fn = Fb.data() + (n + 1) * dim;
      double* o = out + n * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        o[d] = X_[d] + hq_ * (w_.cc * (accC[d] + Fn[d])) + (nz ? nz[d] : 0.0);
      }
      add_starting(n, Fb.data(), o, false);
    }
  }

  // Solves U = block_map(U) by Newton's method with a finite-difference
  // Jacobian assembled group by group. Iteration stops once the update is at
  // rounding level or the residual no longer improves.
  void solve_block(std::size_t s) {
    const std::size_t dim = st_.dim;
    const std::size_t g = st_.group;
    const std::size_t groups = dim / g;
    const std::size_t m = s * g;  // unknowns per group
    std::vector<double> U(s * dim), PhiU(s * dim), Up(s * dim), PhiUp(s * dim);

    // Initial guess: the scheme without starting weights.
    {
      std::vector<double> accP(dim), accC(dim), P(dim), Fp(dim);
      std::vector<double>& Fb = block_F_;
      Fb.assign((s + 1) * dim, 0.0);
      std::copy(F_.begin(), F_.begin() + static_cast<std::ptrdiff_t>(dim), Fb.begin());
      for (std::size_t n = 0; n < s; ++n) {
        history_sums(n, Fb.data(), accP.data(), accC.data());
        const double* nz = noise_ ? noise_ + (n + 1) * dim : nullptr;
        for (std::size_t d = 0; d < dim; ++d) P[d] = X_[d] + hq_ * w_.cp * accP[d] + (nz ? nz[d] : 0.0);
        eval(n + 1, P.data(), delayed(n + 1, U.data()), Fp.data());
        double* o = U.data() + n * dim;
        for (std::size_t d = 0; d < dim; ++d) {
          o[d] = X_[d] + hq_ * w_.cc * (accC[d] + Fp[d]) + (nz ? nz[d] : 0.0);
        }
        eval(n + 1, o, delayed(n + 1, U.data()), Fb.data() + (n + 1) * dim);
      }
    }

    auto index = [&](std::size_t k, std::size_t grp, std::size_t c) { return k * dim + grp * g + c; };
    Eigen::MatrixXd J(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    std::vector<Eigen::MatrixXd> jac(groups, Eigen::MatrixXd(m, m));
    constexpr int kMaxIterations = 30;
    double scale = 1.0;
    for (double v : U) scale = std::max(scale, std::fabs(v));
    double last_residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kMaxIterations; ++it) {
      stats_->newton_iterations += 1;
      block_map(s, U.data(), PhiU.data());
      double residual = 0.0;
      for (std::size_t i = 0; i < U.size(); ++i) {
        if (!std::isfinite(PhiU[i])) throw NonFiniteError("non-finite value in the starting block", time(1));
        residual = std::max(residual, std::fabs(U[i] - PhiU[i]));
      }
      if (residual <= 4 * std::numeric_limits<double>::epsilon() * scale) {
        last_residual = residual;
        break;
      }
      if (it >= 2 && residual >= 0.5 * last_residual && last_residual <= 1e-9 * scale) break;
      last_residual = std::min(last_residual, residual);
      for (std::size_t k = 0; k < s; ++k) {
        for (std::size_t c = 0; c < g; ++c) {
          Up = U;
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t i = index(k, grp, c);
            Up[i] += 1e-7 * (1.0 + std::fabs(U[i]));
          }
          block_map(s, Up.data(), PhiUp.data());
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t i = index(k, grp, c);
            const double eps = Up[i] - U[i];
            const Eigen::Index col = static_cast<Eigen::Index>(k * g + c);
            for (std::size_t k2 = 0; k2 < s; ++k2) {
              for (std::size_t c2 = 0; c2 < g; ++c2) {
                const std::size_t r = index(k2, grp, c2);
                jac[grp](static_cast<Eigen::Index>(k2 * g + c2), col) = (PhiUp[r] - PhiU[r]) / eps;
              }
            }
          }
        }
      }
      double step = 0.0;
      Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
      for (std::size_t grp = 0; grp < groups; ++grp) {
        J = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)) - jac[grp];
        for (std::size_t k = 0; k < s; ++k) {
          for (std::size_t c = 0; c < g; ++c) {
            const std::size_t i = index(k, grp, c);
            rhs(static_cast<Eigen::Index>(k * g + c)) = PhiU[i] - U[i];
          }
        }
        const Eigen::VectorXd delta = J.partialPivLu().solve(rhs);
        for (std::size_t k = 0; k < s; ++k) {
          for (std::size_t c = 0; c < g; ++c) {
            const std::size_t i = index(k, grp, c);
            const double dv = delta(static_cast<Eigen::Index>(k * g + c));
            U[i] += dv;
            step = std::max(step, std::fabs(dv));
          }
        }
      }
      scale = 1.0;
      for (double v : U) scale = std::max(scale, std::fabs(v));
      if (step <= 1e-14 * scale) break;
    }
    if (!(last_residual <= 1e-9 * scale)) {
      throw NumericalError("starting block of the PECE scheme did not converge (residual " +
                           std::to_string(last_residual) + ")");
    }
    std::copy(U.begin(), U.end(), X_ + dim);
    for (std::size_t k = 1; k <= s; ++k) eval(k, X_ + k * dim, delayed(k, nullptr), F_.data() + k * dim);
  }

  const Weights& w_;
  EngineSetup st_;
  double hq_;
  std::vector<double> F_;
  std::vector<double> block_F_;
  double* X_ = nullptr;
  const double* hist_ = nullptr;
  const double* noise_ = nullptr;
  const RhsFn* f_ = nullptr;
  SolveStats* stats_ = nullptr;
};

// ---------------------------------------------------------------------------
// Flat layout: entry (side, level k, component i) lives at
// ((side * L) + k) * n + i, side 0 = lower, 1 = upper.

struct Layout {
  std::size_t L = 0;
  std::size_t n = 0;
  std::size_t dim() const { return 2 * L * n; }
  std::size_t lower(std::size_t k, std::size_t i) const { return k * n + i; }
  std::size_t upper(std::size_t k, std::size_t i) const { return (L + k) * n + i; }
};

void pack(const Layout& lay, const std::vector<FuzzyNumber>& state, double* x) {
  for (std::size_t i = 0; i < lay.n; ++i) {
    for (std::size_t k = 0; k < lay.L; ++k) {
      x[lay.lower(k, i)] = state[i].lower()[k];
      x[lay.upper(k, i)] = state[i].upper()[k];
    }
  }
}

FuzzyState unpack(const Layout& lay, const LevelGrid& grid, const double* x) {
  FuzzyState out;
  out.reserve(lay.n);
  for (std::size_t i = 0; i < lay.n; ++i) {
    std::vector<double> lo(lay.L), hi(lay.L);
    for (std::size_t k = 0; k < lay.L; ++k) {
      lo[k] = x[lay.lower(k, i)];
      hi[k] = x[lay.upper(k, i)];
    }
    out.emplace_back(grid, std::move(lo), std::move(hi));
  }
  return out;
}

// Mirrors state_norm() operation for operation.
double flat_norm(const Layout& lay, const double* x) {
  if (lay.n == 1) {
    double d = 0.0;
    for (std::size_t k = 0; k < lay.L; ++k) {
      d = std::max({d, std::fabs(x[lay.lower(k, 0)]), std::fabs(x[lay.upper(k, 0)])});
    }
    return d;
  }
  double best = 0.0;
  for (std::size_t k = 0; k < lay.L; ++k) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < lay.n; ++i) {
      lo += x[lay.lower(k, i)] * x[lay.lower(k, i)];
      hi += x[lay.upper(k, i)] * x[lay.upper(k, i)];
    }
    best = std::max({best, lo, hi});
  }
  return std::sqrt(best);
}

CheckFn make_checker(const Layout& lay, double h) {
  return [lay, h](std::size_t index, const double* x) {
    const double t = static_cast<double>(index) * h;
    for (std::size_t d = 0; d < lay.dim(); ++d) {
      if (!std::isfinite(x[d]) || std::fabs(x[d]) > kBlowUp) {
        throw NonFiniteError("solution blew up at t = " + fmt_time(t), t);
      }
    }
    std::vector<double> lo(lay.L), hi(lay.L);
    for (std::size_t i = 0; i < lay.n; ++i) {
      for (std::size_t k = 0; k < lay.L; ++k) {
        lo[k] = x[lay.lower(k, i)];
        hi[k] = x[lay.upper(k, i)];
      }
      if (auto problem = validity_problem(lo, hi, kOrderingTolerance)) {
        std::string msg = "alpha-cut ordering violated at t = " + fmt_time(t);
        if (lay.n > 1) msg += " in component " + std::to_string(i);
        msg += ": " + *problem +
               " (the right-hand side does not preserve endpoint order under the endpoint-wise convention)";
        throw OrderingViolation(msg, t);
      }
    }
  };
}

RhsFn make_rhs(const Scenario& s, const Layout& lay) {
  if (const auto* lin = std::get_if<LinearSystem>(&s.system)) {
    const Eigen::MatrixXd A = lin->A;
    const std::size_t groups = 2 * lay.L;
    const std::size_t n = lay.n;
    return [A, groups, n](double, const double* x, const double*, double* out) {
      for (std::size_t g = 0; g < groups; ++g) {
        Eigen::Map<const Eigen::VectorXd> xv(x + g * n, static_cast<Eigen::Index>(n));
        Eigen::Map<Eigen::VectorXd> ov(out + g * n, static_cast<Eigen::Index>(n));
        ov.noalias() = A * xv;
      }
    };
  }
  const Expr rhs = std::get<ScalarSystem>(s.system).rhs;
  const std::optional<Expr> g = s.disturbance;
  const std::vector<double> params = s.param_values;
  const std::size_t dim = lay.dim();
  return [rhs, g, params, dim](double t, const double* x, const double* xd, double* out) {
    try {
      const double gt = g ? g->eval(Env{t, 0.0, std::nullopt, params}) : 0.0;
      Env env{t, 0.0, std::nullopt, params};
      for (std::size_t d = 0; d < dim; ++d) {
        env.u = x[d];
        if (xd) env.ud = xd[d];
        out[d] = g ? rhs.eval(env) + gt : rhs.eval(env);
      }
    } catch (const NonFiniteResult& e) {
      throw NonFiniteError("solution blew up at t = " + fmt_time(t) + ": " + e.what(), t);
    } catch (const EvalError& e) {
      throw NumericalError("right-hand side evaluation failed at t = " + fmt_time(t) + ": " + e.what());
    }
  };
}

Layout layout_of(const Scenario& s) { return Layout{s.grid().size(), s.dimension()}; }

std::size_t delay_steps(const Scenario& s, std::vector<std::string>& warnings) {
  const double tau = s.delay->tau;
  const double h = s.step;
  auto m = static_cast<std::size_t>(std::llround(tau / h));
  if (m == 0) m = 1;
  const double eff = static_cast<double>(m) * h;
  if (std::fabs(eff - tau) > 1e-9 * std::max(tau, h)) {
    std::ostringstream os;
    os << "delay tau = " << tau << " is not a multiple of the step h = " << h << "; rounded to tau_eff = " << eff;
    warnings.push_back(os.str());
  }
  return m;
}

FuzzyTrajectory assemble(const Scenario& s, const Layout& lay, const std::vector<double>& X, std::size_t N) {
  FuzzyTrajectory traj;
  traj.q = s.q;
  traj.times.resize(N + 1);
  traj.states.reserve(N + 1);
  traj.norm.resize(N + 1);
  const std::size_t dim = lay.dim();
  for (std::size_t i = 0; i <= N; ++i) {
    traj.times[i] = static_cast<double>(i) * s.step;
    traj.states.push_back(unpack(lay, s.grid(), X.data() + i * dim));
    traj.norm[i] = state_norm(traj.states.back());
  }
  return traj;
}

FuzzyTrajectory solve_impl(const Scenario& s, bool with_delay) {
  s.validate();
  const Layout lay = layout_of(s);
  const std::size_t N = s.steps();
  const std::size_t dim = lay.dim();
  std::vector<std::string> warnings;
  EngineSetup setup{s.step, dim, lay.n, 0, s.memory_window};
  std::vector<double> hist;
  std::vector<FuzzyNumber> hist_states;
  if (with_delay) {
    const std::size_t m = delay_steps(s, warnings);
    setup.delay_steps = m;
    hist.resize(m * dim);
    for (std::size_t k = 0; k < m; ++k) {
      const double t = -static_cast<double>(m - k) * s.step;
      hist_states.push_back(s.delay->history.at(t, s.grid(), s.param_values));
      pack(lay, {hist_states.back()}, hist.data() + k * dim);
    }
  }
  const Weights w = make_weights(s.q, N);
  std::vector<double> X((N + 1) * dim);
  pack(lay, s.initial, X.data());
  Engine engine(w, setup);
  SolveStats stats;
  engine.run(make_rhs(s, lay), X.data(), hist.empty() ? nullptr : hist.data(), nullptr,
             make_checker(lay, s.step), stats);
  FuzzyTrajectory traj = assemble(s, lay, X, N);
  traj.stats = stats;
  traj.warnings = std::move(warnings);
  if (with_delay) {
    const std::size_t m = hist_states.size();
    std::vector<double> times(m);
    std::vector<FuzzyState> states;
    std::vector<double> norms(m);
    for (std::size_t k = 0; k < m; ++k) {
      times[k] = -static_cast<double>(m - k) * s.step;
      states.push_back({hist_states[k]});
      norms[k] = state_norm(states.back());
    }
    traj.times.insert(traj.times.begin(), times.begin(), times.end());
    traj.states.insert(traj.states.begin(), states.begin(), states.end());
    traj.norm.insert(traj.norm.begin(), norms.begin(), norms.end());
    traj.history_points = m;
  }
  return traj;
}

// Independent stream per (seed, path): the pair is hashed through seed_seq.
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> starting_exponents(double q) {
  // Powers k*q < 1 of the solution's expansion near t = 0. Larger powers are
  // already integrated to second order by the base rule.
  std::vector<double> g;
  for (int k = 0; g.size() < kMaxStartingExponents && k * q < 1.0 - 1e-12; ++k) g.push_back(k * q);
  return g;
}

FuzzyNumber HistorySpec::at(double t, const LevelGrid& grid, std::span<const double> params) const {
  const Env env{t, 0.0, std::nullopt, params};
  if (shape == Shape::Crisp) {
    if (values.size() != 1) throw DomainError("crisp history needs one expression");
    return FuzzyNumber::crisp(values[0].eval(env), grid);
  }
  if (values.size() != 3) throw DomainError("triangular history needs three expressions");
  const double l = values[0].eval(env), m = values[1].eval(env), r = values[2].eval(env);
  if (!(l <= m && m <= r)) {
    throw DomainError("history at t = " + fmt_time(t) + " is not a triangular fuzzy number (needs l <= m <= r)");
  }
  return FuzzyNumber::triangular(l, m, r, grid);
}

std::size_t Scenario::dimension() const {
  if (const auto* lin = std::get_if<LinearSystem>(&system)) return static_cast<std::size_t>(lin->A.rows());
  return 1;
}

const LevelGrid& Scenario::grid() const {
  if (initial.empty()) throw DomainError("scenario has no initial data");
  return initial.front().grid();
}

std::size_t Scenario::steps() const {
  const double r = horizon / step;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r - 1e-9)));
}

void Scenario::validate() const {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("order q must lie in (0, 1], got " + std::to_string(q));
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("horizon must be positive and finite");
  if (!(step > 0.0) || !std::isfinite(step)) throw DomainError("step must be positive and finite");
  if (step > horizon) throw DomainError("step must not exceed the horizon");
  if (steps() > 2'000'000) throw DomainError("too many steps (horizon / step > 2e6)");
  if (initial.empty()) throw DomainError("initial data missing");
  if (param_names.size() != param_values.size()) throw DomainError("parameter names and values differ in count");
  for (double v : param_values) {
    if (!std::isfinite(v)) throw DomainError("parameter values must be finite");
  }
  for (const auto& u : initial) {
    if (!(u.grid() == initial.front().grid())) throw DomainError("initial components use different level grids");
  }
  auto check_params = [&](const Expr& e, const char* what) {
    if (e.parameters() != param_names) {
      throw DomainError(std::string(what) + " was parsed against a different parameter list");
    }
  };
  if (const auto* lin = std::get_if<LinearSystem>(&system)) {
    if (lin->A.rows() == 0 || lin->A.rows() != lin->A.cols()) throw DomainError("matrix A must be square");
    if (!lin->A.allFinite()) throw DomainError("matrix A has non-finite entries");
    if (initial.size() != static_cast<std::size_t>(lin->A.rows())) {
      throw DomainError("linear system of dimension " + std::to_string(lin->A.rows()) + " needs " +
                        std::to_string(lin->A.rows()) + " initial fuzzy numbers, got " +
                        std::to_string(initial.size()));
    }
    if (disturbance) throw DomainError("disturbances are only supported for scalar systems");
    if (delay) throw DomainError("delays are only supported for scalar systems");
  } else {
    const auto& rhs = std::get<ScalarSystem>(system).rhs;
    check_params(rhs, "rhs");
    if (initial.size() != 1) throw DomainError("scalar system needs exactly one initial fuzzy number");
    if (rhs.uses_ud() && !delay) throw DomainError("rhs uses ud but no delay is configured");
  }
  if (disturbance) {
    check_params(*disturbance, "disturbance");
    if (disturbance->uses_u() || disturbance->uses_ud()) {
      throw DomainError("disturbance must depend on t only (crisp g(t))");
    }
  }
  if (delay) {
    if (!(delay->tau > 0.0) || !std::isfinite(delay->tau)) throw DomainError("delay tau must be positive");
    if (delay->history.values.empty()) throw DomainError("delay needs a history");
    for (const auto& e : delay->history.values) {
      check_params(e, "history");
      if (e.uses_u() || e.uses_ud()) throw DomainError("history must depend on t only");
    }
  }
  if (noise) {
    if (!(noise->sigma >= 0.0) || !std::isfinite(noise->sigma)) throw DomainError("noise sigma must be >= 0");
    if (noise->paths < 1) throw DomainError("noise needs at least one path");
  }
  if (memory_window && *memory_window < 1) throw DomainError("memory window must be at least one step");
}

FuzzyTrajectory solve_caputo(const Scenario& s) {
  if (s.delay) throw DomainError("scenario has a delay; use solve_delay");
  if (s.noise) throw DomainError("scenario has noise; use solve_stochastic");
  return solve_impl(s, false);
}

FuzzyTrajectory solve_delay(const Scenario& s) {
  if (!s.delay) throw DomainError("solve_delay needs a delay with a history");
  if (s.noise) throw DomainError("noise is not supported together with a delay");
  return solve_impl(s, true);
}

MomentTrajectory solve_stochastic(const Scenario& s, double a, unsigned workers) {
  s.validate();
  if (!s.noise) throw DomainError("solve_stochastic needs a noise specification");
  if (s.delay) throw DomainError("noise is not supported together with a delay");
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("moment exponent a must be positive");
  const NoiseSpec noise = *s.noise;
  const Layout lay = layout_of(s);
  const std::size_t N = s.steps();
  const std::size_t dim = lay.dim();
  const std::size_t P = noise.paths;
  const Weights w = make_weights(s.q, N);
  const RhsFn rhs = make_rhs(s, lay);
  const CheckFn check = make_checker(lay, s.step);
  const EngineSetup setup{s.step, dim, lay.n, 0, s.memory_window};
  const double coef = std::pow(s.step, s.q - 1.0) * w.cp * noise.sigma;
  const bool noiseless = noise.sigma == 0.0;

  std::vector<double> values(P * (N + 1));
  std::vector<SolveStats> path_stats(P);

  auto run_paths = [&](std::size_t begin, std::size_t end) {
    Engine engine(w, setup);
    std::vector<double> X((N + 1) * dim);
    std::vector<double> nz;
    std::vector<double> dW(N * lay.n);
    std::vector<double> conv(lay.n);
    for (std::size_t p = begin; p < end; ++p) {
      std::fill(X.begin(), X.end(), 0.0);
      pack(lay, s.initial, X.data());
      const double* noise_ptr = nullptr;
      if (!noiseless) {
        std::mt19937_64 rng = path_rng(noise.seed, p);
        std::normal_distribution<double> normal(0.0, std::sqrt(s.step));
        for (double& v : dW) v = normal(rng);
        nz.assign((N + 1) * dim, 0.0);
        for (std::size_t n = 0; n < N; ++n) {
          std::fill(conv.begin(), conv.end(), 0.0);
          for (std::size_t j = 0; j <= n; ++j) {
            const double bj = w.b[n - j];
            for (std::size_t i = 0; i < lay.n; ++i) conv[i] += bj * dW[j * lay.n + i];
          }
          double* row = nz.data() + (n + 1) * dim;
          for (std::size_t side = 0; side < 2; ++side) {
            for (std::size_t k = 0; k < lay.L; ++k) {
              for (std::size_t i = 0; i < lay.n; ++i) row[(side * lay.L + k) * lay.n + i] = coef * conv[i];
            }
          }
        }
        noise_ptr = nz.data();
      }
      engine.run(rhs, X.data(), nullptr, noise_ptr, check, path_stats[p]);
      for (std::size_t i = 0; i <= N; ++i) {
        values[p * (N + 1) + i] = std::pow(flat_norm(lay, X.data() + i * dim), a);
      }
    }
  };

  const std::size_t nworkers = std::max<std::size_t>(1, std::min<std::size_t>(workers, P));
  if (nworkers == 1) {
    run_paths(0, P);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nworkers);
    const std::size_t chunk = (P + nworkers - 1) / nworkers;
    for (std::size_t wi = 0; wi < nworkers; ++wi) {
      const std::size_t b = wi * chunk;
      const std::size_t e = std::min(P, b + chunk);
      pool.emplace_back([&, wi, b, e] {
        try {
          if (b < e) run_paths(b, e);
        } catch (...) {
          errors[wi] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  MomentTrajectory out;
  out.q = s.q;
  out.a = a;
  out.paths = P;
  out.times.resize(N + 1);
  out.moment.resize(N + 1);
  out.std_error.resize(N + 1);
  for (std::size_t i = 0; i <= N; ++i) {
    out.times[i] = static_cast<double>(i) * s.step;
    // Shifted sums: exact when all paths agree.
    const double shift = values[i];
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double d = values[p * (N + 1) + i] - shift;
      sum += d;
      sumsq += d * d;
    }
    const double Pd = static_cast<double>(P);
    out.moment[i] = shift + sum / Pd;
    double var = P > 1 ? (sumsq - sum * sum / Pd) / (Pd - 1.0) : 0.0;
    if (var < 0.0) var = 0.0;
    out.std_error[i] = std::sqrt(var / Pd);
  }
  for (const auto& st : path_stats) {
    out.stats.steps += st.steps;
    out.stats.rhs_evaluations += st.rhs_evaluations;
    out.stats.newton_iterations += st.newton_iterations;
  }
  return out;
}

FuzzyTrajectory exact_linear(const Eigen::MatrixXd& A, std::span<const FuzzyNumber> u0, double q,
                             std::span<const double> times) {
  if (!(q > 0.0 && q <= 1.0)) throw DomainError("order q must lie in (0, 1]");
  if (A.rows() == 0 || A.rows() != A.cols()) throw DomainError("matrix A must be square");
  const std::size_t n = static_cast<std::size_t>(A.rows());
  if (u0.size() != n) throw DomainError("initial data dimension does not match A");
  if (!A.allFinite()) throw DomainError("matrix A has non-finite entries");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  if (es.info() != Eigen::Success) throw UnsupportedMatrix("eigendecomposition failed");
  const Eigen::VectorXcd lam_c = es.eigenvalues();
  const Eigen::MatrixXcd V_c = es.eigenvectors();
  const double scale = 1.0 + A.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lam_c.size(); ++i) {
    if (std::fabs(lam_c(i).imag()) > 1e-10 * scale) throw UnsupportedMatrix("matrix has a complex spectrum");
  }
  Eigen::MatrixXd V = V_c.real();
  if (V_c.imag().cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, V.cwiseAbs().maxCoeff())) {
    throw UnsupportedMatrix("eigenvectors are not real");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(V);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 0.0) || smax / smin > 1e8) {
    throw UnsupportedMatrix("eigenbasis is ill-conditioned or defective (condition > 1e8)");
  }
  const Eigen::VectorXd lam = lam_c.real();
  const Eigen::MatrixXd Vinv = V.inverse();
  const LevelGrid& grid = u0.front().grid();
  for (const auto& u : u0) {
    if (!(u.grid() == grid)) throw DomainError("initial components use different level grids");
  }
  const std::size_t L = grid.size();
  FuzzyTrajectory traj;
  traj.q = q;
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("times must be finite and nonnegative");
    Eigen::VectorXd e(static_cast<Eigen::Index>(n));
    const double tq = std::pow(t, q);
    for (std::size_t i = 0; i < n; ++i) e(static_cast<Eigen::Index>(i)) = mlf::ml_one(q, lam(static_cast<Eigen::Index>(i)) * tq);
    const Eigen::MatrixXd Phi = V * e.asDiagonal() * Vinv;
    std::vector<std::vector<double>> lo(n, std::vector<double>(L)), hi(n, std::vector<double>(L));
    for (std::size_t k = 0; k < L; ++k) {
      Eigen::VectorXd xl(static_cast<Eigen::Index>(n)), xu(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        xl(static_cast<Eigen::Index>(i)) = u0[i].lower()[k];
        xu(static_cast<Eigen::Index>(i)) = u0[i].upper()[k];
      }
      const Eigen::VectorXd yl = Phi * xl;
      const Eigen::VectorXd yu = Phi * xu;
      for (std::size_t i = 0; i < n; ++i) {
        lo[i][k] = yl(static_cast<Eigen::Index>(i));
        hi[i][k] = yu(static_cast<Eigen::Index>(i));
      }
    }
    FuzzyState state;
    for (std::size_t i = 0; i < n; ++i) {
      if (auto problem = validity_problem(lo[i], hi[i], kOrderingTolerance)) {
        throw OrderingViolation("exact linear flow breaks alpha-cut ordering at t = " + fmt_time(t) + ": " +
                                    *problem,
                                t);
      }
      state.emplace_back(grid, std::move(lo[i]), std::move(hi[i]));
    }
    traj.times.push_back(t);
    traj.norm.push_back(state_norm(state));
    traj.states.push_back(std::move(state));
  }
  return traj;
}

}  // namespace mlfuzz
