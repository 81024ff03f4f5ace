#include "mlfuzz/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "mlfuzz/error.hpp"
#include "mlfuzz/expr.hpp"
#include "mlfuzz/io.hpp"

namespace mlfuzz {

namespace {

using ojson = nlohmann::ordered_json;

ojson matrix_json(const Eigen::MatrixXd& A) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
    rows.push_back(row);
  }
  return rows;
}

ojson envelope_json(const Envelope& env) {
  ojson j;
  j["kind"] = std::string(to_string(env.kind));
  j["q"] = env.q;
  j["a"] = env.a;
  j["M"] = env.M;
  j["lambda"] = env.lambda;
  j["offset"] = env.offset;
  j["baseline"] = env.baseline;
  if (env.gain != 0.0) j["gain"] = env.gain;
  j["flags"] = env.flags;
  return j;
}

ojson report_json(const EnvelopeReport& r) {
  ojson j;
  j["points"] = r.n_points;
  j["violations"] = r.violations;
  j["max_excess"] = r.max_excess;
  j["first_violation_t"] = r.first_violation_t ? ojson(*r.first_violation_t) : ojson("none");
  double min_margin = std::numeric_limits<double>::infinity();
  for (double m : r.margins) min_margin = std::min(min_margin, m);
  j["min_margin"] = r.margins.empty() ? ojson("none") : ojson(min_margin);
  j["pass"] = r.pass;
  return j;
}

ojson scenario_json(const Config& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  ojson j;
  j["name"] = cfg.name.empty() ? std::string("unnamed") : cfg.name;
  j["q"] = sc.q;
  if (sc.rhs) j["rhs"] = *sc.rhs;
  if (sc.matrix) j["matrix"] = matrix_json(*sc.matrix);
  if (!sc.parameters.empty()) {
    ojson p;
    for (const auto& [k, v] : sc.parameters) p[k] = v;
    j["parameters"] = p;
  }
  ojson init = ojson::array();
  for (const auto& f : sc.initial) {
    ojson e;
    switch (f.shape) {
      case FuzzySpec::Shape::Crisp: e["crisp"] = f.values[0]; break;
      case FuzzySpec::Shape::Triangular: e["triangular"] = f.values; break;
      case FuzzySpec::Shape::Explicit:
        e["levels"] = f.levels;
        e["lower"] = f.lower;
        e["upper"] = f.upper;
        break;
    }
    init.push_back(e);
  }
  j["initial"] = init;
  j["levels"] = sc.levels;
  if (sc.disturbance) j["disturbance"] = *sc.disturbance;
  if (sc.tau) {
    j["delay_tau"] = *sc.tau;
    j["delay_history"] = sc.history->values;
  }
  if (sc.noise) {
    j["noise_sigma"] = sc.noise->sigma;
    j["noise_paths"] = sc.noise->paths;
    j["noise_seed"] = sc.noise->seed;
  }
  j["horizon"] = sc.horizon;
  j["step"] = sc.step;
  if (sc.memory_window) j["memory_window"] = *sc.memory_window;
  return j;
}

double max_diameter(const FuzzyState& s) {
  double d = 0.0;
  for (const auto& u : s) {
    for (std::size_t k = 0; k < u.size(); ++k) d = std::max(d, u.diameter(k));
  }
  return d;
}

ojson trajectory_summary(const FuzzyTrajectory& traj) {
  const std::size_t first = traj.history_points;
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (std::size_t i = first; i < traj.size(); ++i) {
    const double d = max_diameter(traj.states[i]);
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  ojson j;
  j["initial_norm"] = traj.norm[first];
  j["terminal_norm"] = traj.norm.back();
  j["min_diameter"] = dmin;
  j["max_diameter"] = dmax;
  return j;
}

// |g| at the nodes and its running supremum.
std::vector<double> running_sup_of_g(const Scenario& s, std::size_t nodes, double& total) {
  std::vector<double> sup(nodes, 0.0);
  total = 0.0;
  if (!s.disturbance) return sup;
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes; ++i) {
    const double t = static_cast<double>(i) * s.step;
    acc = std::max(acc, std::fabs(s.disturbance->eval(Env{t, 0.0, std::nullopt, s.param_values})));
    sup[i] = acc;
  }
  total = acc;
  return sup;
}

LyapConstants lyap_from(const CertificateRequest& c) {
  LyapConstants lc;
  lc.c1 = c.get("c1", 1.0);
  lc.c2 = c.get("c2", 1.0);
  lc.c3 = c.get("c3", 1.0);
  lc.c4 = c.get("c4", 1.0);
  lc.a = c.get("a", 1.0);
  lc.alpha = c.get("alpha", 1.0);
  lc.beta = c.get("beta", 1.0);
  return lc;
}

std::string format_scalar(const ojson& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return io::format_double(v.get<double>());
  return v.dump();
}

void render(std::ostringstream& os, const std::string& prefix, const ojson& value) {
  if (value.is_object()) {
    for (auto it = value.begin(); it != value.end(); ++it) {
      render(os, prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
    }
    return;
  }
  os << prefix << ": ";
  if (value.is_array()) {
    os << '[';
    bool first = true;
    for (const auto& e : value) {
      if (!first) os << ", ";
      first = false;
      if (e.is_primitive()) {
        os << format_scalar(e);
      } else {
        os << e.dump();
      }
    }
    os << ']';
  } else {
    os << format_scalar(value);
  }
  os << '\n';
}

}  // namespace

EnvelopeReport compare_pointwise(std::span<const double> times, std::span<const double> values,
                                 std::span<const double> bounds, double rtol, double atol) {
  if (times.size() != values.size() || times.size() != bounds.size()) {
    throw DomainError("envelope comparison needs equally long time, value and bound arrays");
  }
  if (!(rtol >= 0.0) || !(atol >= 0.0)) throw DomainError("tolerances must be nonnegative");
  EnvelopeReport r;
  r.n_points = times.size();
  r.margins.resize(times.size());
  r.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double threshold = bounds[i] * (1.0 + rtol) + atol;
    r.margins[i] = bounds[i] - values[i];
    const double excess = (values[i] - threshold) / std::max(std::fabs(threshold), 1e-300);
    if (!std::isfinite(values[i]) || values[i] > threshold) {
      ++r.violations;
      if (!r.first_violation_t) r.first_violation_t = times[i];
    }
    r.max_excess = std::max(r.max_excess, std::isfinite(excess) ? excess : std::numeric_limits<double>::infinity());
  }
  if (times.empty()) r.max_excess = 0.0;
  r.pass = r.violations == 0;
  return r;
}

EnvelopeReport verify_envelope(const FuzzyTrajectory& traj, const Envelope& env, double rtol, double atol,
                               std::span<const double> running_sup) {
  if (traj.q != env.q) throw DomainError("trajectory and envelope use different orders q");
  if (!running_sup.empty() && running_sup.size() != traj.size()) {
    throw DomainError("running supremum must have one entry per trajectory node");
  }
  std::vector<double> t, v, b;
  for (std::size_t i = traj.history_points; i < traj.size(); ++i) {
    t.push_back(traj.times[i]);
    v.push_back(traj.norm[i]);
    b.push_back(running_sup.empty() ? env(traj.times[i]) : env.at_running(traj.times[i], running_sup[i]));
  }
  return compare_pointwise(t, v, b, rtol, atol);
}

EnvelopeReport verify_envelope(const MomentTrajectory& traj, const Envelope& env, double rtol, double atol) {
  if (traj.q != env.q) throw DomainError("moment trajectory and envelope use different orders q");
  std::vector<double> b(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) b[i] = env(traj.times[i]) + 3.0 * traj.std_error[i];
  return compare_pointwise(traj.times, traj.moment, b, rtol, atol);
}

const char* to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Pass: return "PASS";
    case RunStatus::Fail: return "FAIL";
    case RunStatus::NotApplicable: return "NOT APPLICABLE";
  }
  return "?";
}

std::string RunReport::to_text() const {
  std::ostringstream os;
  bool first = true;
  for (auto it = data.begin(); it != data.end(); ++it) {
    if (!first) os << '\n';
    first = false;
    os << '[' << it.key() << "]\n";
    render(os, "", it.value());
  }
  os << "\nresult: " << mlfuzz::to_string(status) << '\n';
  return os.str();
}

std::string RunReport::to_json() const {
  ojson j = data;
  j["result"] = mlfuzz::to_string(status);
  return j.dump(2) + "\n";
}

namespace {

struct Issued {
  std::optional<Envelope> env;
  std::optional<SmallGainResult> sg;
  std::vector<double> running;  // running sup of |g| for ISS envelopes
  ojson cert;
  std::optional<std::string> not_applicable;
};

// Supremum of the history norm over [-tau, 0], including u(0).
double history_sup(const Scenario& s) {
  double sup = state_norm(s.initial);
  const auto m = std::max<long long>(1, std::llround(s.delay->tau / s.step));
  for (long long k = 1; k <= m; ++k) {
    const double t = -static_cast<double>(k) * s.step;
    sup = std::max(sup, norm(s.delay->history.at(t, s.grid(), s.param_values)));
  }
  return sup;
}

Issued issue_certificate(const Scenario& s, const CertificateRequest& cr) {
  const std::string& kind = cr.kind;
  Issued out;
  ojson& cert = out.cert;
  cert["kind"] = kind;
  if (!cr.constants.empty()) {
    ojson c;
    for (const auto& [k, v] : cr.constants) c[k] = v;
    cert["constants"] = c;
  }
  if (kind == "stochastic" && !s.noise) throw DomainError("stochastic certificate needs a noise section");
  if (s.noise && kind != "stochastic" && kind != "none") {
    throw DomainError("noisy scenarios are verified with the stochastic certificate");
  }
  if (kind == "delay" && !s.delay) throw DomainError("delay certificate needs a delay section");
  if ((kind == "lmi" || kind == "small_gain") && !s.is_linear()) {
    throw DomainError(kind + " certificate needs a linear system (scenario.system.matrix)");
  }
  if (kind == "small_gain" && s.dimension() != 2) throw DomainError("small_gain certificate needs a 2x2 system");
  const double u0_norm = state_norm(s.initial);
  try {
    if (kind == "ml") {
      Envelope e;
      e.q = s.q;
      e.a = cr.get("a", 1.0);
      e.M = cr.get("M", 1.0);
      e.lambda = cr.get("lambda", 1.0);
      e.baseline = u0_norm;
      if (!(e.a > 0.0) || e.M < 0.0 || e.lambda < 0.0) throw DomainError("ml envelope needs a > 0, M >= 0, lambda >= 0");
      out.env = e;
    } else if (kind == "iss" || kind == "ultimate") {
      double g_sup = 0.0;
      out.running = running_sup_of_g(s, s.steps() + 1, g_sup);
      const LyapConstants lc = lyap_from(cr);
      if (kind == "iss") {
        out.env = iss_envelope(lc, s.q, u0_norm, g_sup, cr.allow_sub_unit);
        cert["kappa"] = lc.kappa();
        cert["C"] = out.env->gain;
      } else {
        out.env = ultimate_envelope(lc, s.q, u0_norm, g_sup, cr.allow_sub_unit);
        cert["ultimate_bound"] = ultimate_bound(lc.alpha, lc.beta, lc.a, g_sup);
        out.running.clear();
      }
      cert["g_sup"] = g_sup;
    } else if (kind == "lmi") {
      const auto& A = std::get<LinearSystem>(s.system).A;
      const LmiCertificate lmi = lmi_certificate(A, s.q, cr.P);
      cert["P"] = matrix_json(lmi.P);
      cert["P_source"] = lmi.user_supplied ? "user" : "lyapunov(A'P + PA = -I)";
      cert["lambda_min_P"] = lmi.lambda_min;
      cert["lambda_max_P"] = lmi.lambda_max;
      cert["mu"] = lmi.mu;
      cert["M"] = lmi.M;
      cert["residual"] = lmi.residual;
      out.env = lmi.envelope(s.q, u0_norm);
    } else if (kind == "delay") {
      const double phi_sup = history_sup(s);
      out.env = delay_envelope(cr.get("c1", 1.0), cr.get("c2", 1.0), cr.get("alpha", 1.0), cr.get("a", 1.0), s.q,
                               phi_sup, cr.allow_sub_unit);
      cert["phi_sup"] = phi_sup;
    } else if (kind == "small_gain") {
      const double x0 = norm(s.initial[0]);
      const double y0 = norm(s.initial[1]);
      out.sg = small_gain(cr.get("M1", 1.0), cr.get("M2", 1.0), cr.get("kappa1", 1.0), cr.get("kappa2", 1.0),
                          cr.get("gamma12", 0.0), cr.get("gamma21", 0.0), x0, y0, s.q);
      cert["X_bound"] = out.sg->X_bound;
      cert["Y_bound"] = out.sg->Y_bound;
      out.env = out.sg->envelope;
    } else if (kind == "stochastic") {
      const double a = cr.get("a", 2.0);
      const double c2 = cr.get("c2", 1.0);
      const double w0 = c2 * std::pow(u0_norm, a);
      out.env = stochastic_envelope(cr.get("alpha", 1.0), cr.get("beta", 1.0), cr.get("c1", 1.0), c2, a, w0, s.q);
      cert["w0"] = w0;
      cert["kappa"] = cr.get("alpha", 1.0) / c2;
      cert["limit"] = out.env->offset;
    }
  } catch (const NotApplicable& e) {
    cert["not_applicable"] = e.what();
    out.not_applicable = e.what();
    out.env.reset();
    out.sg.reset();
  }
  if (out.env) cert["envelope"] = envelope_json(*out.env);
  return out;
}

}  // namespace

EnvelopeReport verify_series(const Config& cfg, std::span<const double> times, std::span<const double> norms) {
  const Scenario s = cfg.scenario.build();
  const std::string& kind = cfg.certificate.kind;
  if (kind == "none" || kind == "stochastic" || kind == "small_gain") {
    throw DomainError("certificate kind '" + kind + "' cannot be checked against a norm series");
  }
  if (norms.size() != times.size()) throw DomainError("times and norms differ in length");
  Issued is = issue_certificate(s, cfg.certificate);
  if (!is.env) throw NotApplicable(is.not_applicable.value_or("certificate does not apply"));
  std::vector<double> t, v, b;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) continue;
    t.push_back(times[i]);
    v.push_back(norms[i]);
    if (is.running.empty()) {
      b.push_back((*is.env)(times[i]));
    } else {
      const auto k = static_cast<std::size_t>(std::llround(times[i] / s.step));
      b.push_back(is.env->at_running(times[i], is.running[std::min(k, is.running.size() - 1)]));
    }
  }
  return compare_pointwise(t, v, b, cfg.verify.rtol, cfg.verify.atol);
}

RunReport run_scenario(const Config& cfg, const RunOptions& options) {
  const Scenario s = cfg.scenario.build();
  const CertificateRequest& cr = cfg.certificate;
  const VerifySettings& vs = cfg.verify;
  const std::string& kind = cr.kind;
  RunReport rep;
  rep.data["scenario"] = scenario_json(cfg);
  Issued is = issue_certificate(s, cr);
  ojson& cert = is.cert;
  if (is.not_applicable) {
    rep.data["certificate"] = cert;
    rep.status = RunStatus::NotApplicable;
    return rep;
  }
  const std::optional<Envelope>& env = is.env;
  const std::optional<SmallGainResult>& sg = is.sg;
  const std::vector<double>& running = is.running;
  const bool stochastic = s.noise.has_value();

  ojson ver;
  ver["rtol"] = vs.rtol;
  ver["atol"] = vs.atol;
  ojson timing;
  std::vector<std::string> warnings;
  bool pass = true;

  if (stochastic) {
    const double a = cr.get("a", 2.0);
    MomentTrajectory mt = solve_stochastic(s, a, options.workers);
    if (env) {
      const EnvelopeReport r = verify_envelope(mt, *env, vs.rtol, vs.atol);
      ver["envelope"] = report_json(r);
      pass = r.pass;
    }
    ojson sum;
    sum["paths"] = mt.paths;
    sum["initial_moment"] = mt.moment.front();
    sum["terminal_moment"] = mt.moment.back();
    sum["terminal_stderr"] = mt.std_error.back();
    ver["moments"] = sum;
    timing["steps"] = mt.stats.steps;
    timing["rhs_evaluations"] = mt.stats.rhs_evaluations;
    timing["newton_iterations"] = mt.stats.newton_iterations;
    warnings = mt.warnings;
    rep.moments = std::move(mt);
  } else {
    FuzzyTrajectory traj = s.delay ? solve_delay(s) : solve_caputo(s);
    if (s.delay) cert["tau_effective"] = static_cast<double>(traj.history_points) * s.step;
    if (sg) {
      // Composite envelope on norm(x) + norm(y); component bounds as sup checks.
      std::vector<double> t, sum, xs, ys, bound, xb, yb;
      for (std::size_t i = 0; i < traj.size(); ++i) {
        const double x = norm(traj.states[i][0]);
        const double y = norm(traj.states[i][1]);
        t.push_back(traj.times[i]);
        sum.push_back(x + y);
        xs.push_back(x);
        ys.push_back(y);
        bound.push_back((*env)(traj.times[i]));
        xb.push_back(sg->X_bound);
        yb.push_back(sg->Y_bound);
      }
      const EnvelopeReport rc = compare_pointwise(t, sum, bound, vs.rtol, vs.atol);
      const EnvelopeReport rx = compare_pointwise(t, xs, xb, vs.rtol, vs.atol);
      const EnvelopeReport ry = compare_pointwise(t, ys, yb, vs.rtol, vs.atol);
      ver["envelope"] = report_json(rc);
      ver["x_bound"] = report_json(rx);
      ver["y_bound"] = report_json(ry);
      pass = rc.pass && rx.pass && ry.pass;
    } else if (env) {
      const EnvelopeReport r = verify_envelope(traj, *env, vs.rtol, vs.atol, running);
      ver["envelope"] = report_json(r);
      pass = r.pass;
      if (kind == "ultimate") {
        const double ub = cert["ultimate_bound"].get<double>();
        ver["terminal_norm_over_bound"] = ub > 0.0 ? ojson(traj.norm.back() / ub) : ojson("n/a");
      }
    } else {
      ver["envelope"] = "none requested";
    }
    ver["trajectory"] = trajectory_summary(traj);
    timing["steps"] = traj.stats.steps;
    timing["rhs_evaluations"] = traj.stats.rhs_evaluations;
    timing["newton_iterations"] = traj.stats.newton_iterations;
    warnings = traj.warnings;
    rep.trajectory = std::move(traj);
  }
  rep.data["certificate"] = cert;
  rep.data["verification"] = ver;
  rep.data["timing"] = timing;
  rep.data["warnings"] = warnings;
  rep.status = pass ? RunStatus::Pass : RunStatus::Fail;
  return rep;
}

std::optional<double> SweepResult::pass_rate() const {
  if (rows.empty()) return std::nullopt;
  return static_cast<double>(passes) / static_cast<double>(rows.size());
}

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os << "index";
  for (const auto& a : axes) os << ',' << a;
  os << ",status,max_excess\n";
  for (const auto& r : rows) {
    os << r.index;
    for (double v : r.values) os << ',' << io::format_double(v);
    os << ',' << r.status << ',' << (r.max_excess ? io::format_double(*r.max_excess) : std::string("")) << '\n';
  }
  return os.str();
}

std::string SweepResult::to_text() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << '#' << r.index;
    for (std::size_t k = 0; k < axes.size(); ++k) os << ' ' << axes[k] << '=' << io::format_double(r.values[k]);
    os << "  " << r.status;
    if (r.max_excess) os << "  max_excess=" << io::format_double(*r.max_excess);
    if (!r.message.empty()) os << "  (" << r.message << ')';
    os << '\n';
  }
  os << "rows: " << rows.size() << '\n';
  os << "passes: " << passes << '\n';
  const auto rate = pass_rate();
  os << "pass_rate: " << (rate ? io::format_double(*rate) : std::string("n/a")) << '\n';
  return os.str();
}

SweepResult sweep(const Config& config, unsigned workers) {
  if (!config.sweep) throw DomainError("config has no sweep section");
  const auto& axes = *config.sweep;
  SweepResult out;
  std::size_t total = axes.empty() ? 0 : 1;
  for (const auto& a : axes) {
    out.axes.push_back(a.name);
    total *= a.values.size();
    if (total > kMaxSweepRows) throw DomainError("sweep grid exceeds 10^4 combinations");
  }
  out.rows.resize(total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < total; idx = next++) {
      SweepRow& row = out.rows[idx];
      row.index = idx;
      row.values.resize(axes.size());
      std::size_t rem = idx;
      for (std::size_t k = axes.size(); k-- > 0;) {
        row.values[k] = axes[k].values[rem % axes[k].values.size()];
        rem /= axes[k].values.size();
      }
      try {
        Config c = config;
        c.sweep.reset();
        for (std::size_t k = 0; k < axes.size(); ++k) apply_override(c, axes[k].name, row.values[k]);
        const RunReport rep = run_scenario(c);
        switch (rep.status) {
          case RunStatus::Pass: row.status = "pass"; break;
          case RunStatus::Fail: row.status = "fail"; break;
          case RunStatus::NotApplicable: row.status = "not-applicable"; break;
        }
        const auto& ver = rep.data.contains("verification") ? rep.data["verification"] : ojson();
        if (ver.is_object() && ver.contains("envelope") && ver["envelope"].is_object()) {
          row.max_excess = ver["envelope"]["max_excess"].get<double>();
        }
      } catch (const NonFiniteError& e) {
        row.status = "NonFinite";
        row.message = e.what();
      } catch (const OrderingViolation& e) {
        row.status = "OrderingViolation";
        row.message = e.what();
      } catch (const NumericalError& e) {
        row.status = "NumericalError";
        row.message = e.what();
      } catch (const std::exception& e) {
        row.status = "error";
        row.message = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& r : out.rows) out.passes += r.status == "pass";
  return out;
}

}  // namespace mlfuzz
