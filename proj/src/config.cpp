#include "mlfuzz/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "mlfuzz/error.hpp"
#include "mlfuzz/expr.hpp"

namespace mlfuzz {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const {
    throw ConfigError(source_, line_of(node), message);
  }

  static int line_of(const YAML::Node& node) {
    const YAML::Mark m = node.Mark();
    return m.line >= 0 ? m.line + 1 : 0;
  }

  void require_map(const YAML::Node& node, const std::string& what) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& what, const std::set<std::string>& allowed) const {
    require_map(node, what);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        std::string list;
        for (const auto& k : allowed) list += (list.empty() ? "" : ", ") + k;
        fail(kv.first, "unknown key '" + key + "' in " + what + " (allowed: " + list + ")");
      }
    }
  }

  double number(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a number");
    try {
      const double v = node.as<double>();
      if (!std::isfinite(v)) fail(node, what + " must be finite");
      return v;
    } catch (const YAML::BadConversion&) {
      fail(node, what + " must be a number, got '" + node.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& node, const std::string& what) const {
    const double v = number(node, what);
    if (v < 0 || v != std::floor(v) || v > 1e12) fail(node, what + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const YAML::Node& node) const {
    if (!node.IsScalar()) fail(node, "seed must be an integer");
    try {
      return node.as<std::uint64_t>();
    } catch (const YAML::BadConversion&) {
      fail(node, "seed must be a nonnegative integer, got '" + node.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& node, const std::string& what) const {
    try {
      return node.as<bool>();
    } catch (const YAML::BadConversion&) {
      fail(node, what + " must be true or false");
    }
  }

  std::string text(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a string");
    return node.Scalar();
  }

  std::vector<double> numbers(const YAML::Node& node, const std::string& what) const {
    if (!node.IsSequence()) fail(node, what + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& item : node) out.push_back(number(item, what));
    return out;
  }

  Eigen::MatrixXd matrix(const YAML::Node& node, const std::string& what) const {
    if (!node.IsSequence() || node.size() == 0) fail(node, what + " must be a nonempty list of rows");
    const std::size_t n = node.size();
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = numbers(node[i], what + " row");
      if (row.size() != n) fail(node[i], what + " must be square (" + std::to_string(n) + " columns per row)");
      for (std::size_t j = 0; j < n; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return A;
  }

  FuzzySpec fuzzy(const YAML::Node& node, const std::string& what) const {
    FuzzySpec spec;
    if (node.IsScalar()) {
      spec.values = {number(node, what)};
      return spec;
    }
    check_keys(node, what, {"crisp", "triangular", "levels", "lower", "upper"});
    if (node["levels"] || node["lower"] || node["upper"]) {
      if (!node["levels"] || !node["lower"] || !node["upper"] || node.size() != 3) {
        fail(node, what + " with explicit cuts needs exactly levels, lower and upper");
      }
      spec.shape = FuzzySpec::Shape::Explicit;
      spec.levels = numbers(node["levels"], what + ".levels");
      spec.lower = numbers(node["lower"], what + ".lower");
      spec.upper = numbers(node["upper"], what + ".upper");
      try {
        (void)FuzzyNumber(LevelGrid(spec.levels), spec.lower, spec.upper);
      } catch (const DomainError& e) {
        fail(node, what + ": " + e.what());
      }
      return spec;
    }
    if (node.size() != 1) fail(node, what + " needs exactly one of crisp, triangular");
    if (node["crisp"]) {
      spec.values = {number(node["crisp"], what + ".crisp")};
    } else {
      spec.shape = FuzzySpec::Shape::Triangular;
      spec.values = numbers(node["triangular"], what + ".triangular");
      if (spec.values.size() != 3) fail(node["triangular"], what + ".triangular needs [l, m, r]");
      if (!(spec.values[0] <= spec.values[1] && spec.values[1] <= spec.values[2])) {
        fail(node["triangular"], what + ".triangular needs l <= m <= r");
      }
    }
    return spec;
  }

  std::string expression(const YAML::Node& node, const std::string& what,
                         const std::vector<std::string>& params) const {
    const std::string src = text(node, what);
    try {
      (void)Expr::parse(src, params);
    } catch (const ParseError& e) {
      fail(node, what + ": " + e.what() + " (at offset " + std::to_string(e.offset()) + ")");
    }
    return src;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

ScenarioConfig read_scenario(const Reader& r, const YAML::Node& node) {
  r.check_keys(node, "scenario",
               {"q", "system", "params", "initial", "levels", "disturbance", "delay", "noise", "horizon", "step",
                "memory_window"});
  ScenarioConfig sc;
  if (!node["q"]) r.fail(node, "scenario.q is required");
  sc.q = r.number(node["q"], "scenario.q");
  if (const auto p = node["params"]) {
    r.require_map(p, "scenario.params");
    for (const auto& kv : p) {
      sc.parameters.emplace_back(kv.first.as<std::string>(), r.number(kv.second, "parameter " + kv.first.as<std::string>()));
    }
  }
  std::vector<std::string> names;
  for (const auto& [k, v] : sc.parameters) names.push_back(k);

  const auto sys = node["system"];
  if (!sys) r.fail(node, "scenario.system is required");
  r.check_keys(sys, "scenario.system", {"rhs", "matrix"});
  if (sys.size() != 1) r.fail(sys, "scenario.system needs exactly one of rhs, matrix");
  if (sys["rhs"]) sc.rhs = r.expression(sys["rhs"], "scenario.system.rhs", names);
  if (sys["matrix"]) sc.matrix = r.matrix(sys["matrix"], "scenario.system.matrix");

  const auto init = node["initial"];
  if (!init) r.fail(node, "scenario.initial is required");
  if (init.IsSequence()) {
    for (std::size_t i = 0; i < init.size(); ++i) {
      sc.initial.push_back(r.fuzzy(init[i], "scenario.initial[" + std::to_string(i) + "]"));
    }
  } else {
    sc.initial.push_back(r.fuzzy(init, "scenario.initial"));
  }
  if (node["levels"]) {
    sc.levels = r.count(node["levels"], "scenario.levels");
    if (sc.levels < 1) r.fail(node["levels"], "scenario.levels must be at least 1");
  }
  if (node["disturbance"]) sc.disturbance = r.expression(node["disturbance"], "scenario.disturbance", names);
  if (const auto d = node["delay"]) {
    r.check_keys(d, "scenario.delay", {"tau", "history"});
    if (!d["tau"] || !d["history"]) r.fail(d, "scenario.delay needs tau and history");
    sc.tau = r.number(d["tau"], "scenario.delay.tau");
    const auto h = d["history"];
    HistoryConfig hc;
    if (h.IsScalar()) {
      hc.values = {r.expression(h, "scenario.delay.history", names)};
    } else {
      r.check_keys(h, "scenario.delay.history", {"crisp", "triangular"});
      if (h.size() != 1) r.fail(h, "scenario.delay.history needs exactly one of crisp, triangular");
      if (h["crisp"]) {
        hc.values = {r.expression(h["crisp"], "scenario.delay.history.crisp", names)};
      } else {
        const auto tri = h["triangular"];
        if (!tri.IsSequence() || tri.size() != 3) r.fail(tri, "history triangular needs three expressions");
        hc.shape = HistorySpec::Shape::Triangular;
        for (const auto& e : tri) hc.values.push_back(r.expression(e, "scenario.delay.history.triangular", names));
      }
    }
    sc.history = hc;
  }
  if (const auto nz = node["noise"]) {
    r.check_keys(nz, "scenario.noise", {"sigma", "paths", "seed"});
    NoiseSpec ns;
    if (nz["sigma"]) ns.sigma = r.number(nz["sigma"], "scenario.noise.sigma");
    if (nz["paths"]) ns.paths = r.count(nz["paths"], "scenario.noise.paths");
    if (nz["seed"]) ns.seed = r.seed(nz["seed"]);
    sc.noise = ns;
  }
  if (!node["horizon"] || !node["step"]) r.fail(node, "scenario needs horizon and step");
  sc.horizon = r.number(node["horizon"], "scenario.horizon");
  sc.step = r.number(node["step"], "scenario.step");
  if (node["memory_window"]) sc.memory_window = r.count(node["memory_window"], "scenario.memory_window");
  try {
    (void)sc.build();
  } catch (const Error& e) {
    r.fail(node, std::string("invalid scenario: ") + e.what());
  }
  return sc;
}

CertificateRequest read_certificate(const Reader& r, const YAML::Node& node) {
  r.check_keys(node, "certificate", {"kind", "constants", "P", "allow_sub_unit"});
  CertificateRequest cr;
  if (!node["kind"]) r.fail(node, "certificate.kind is required");
  cr.kind = r.text(node["kind"], "certificate.kind");
  const auto& kinds = certificate_kinds();
  if (std::find(kinds.begin(), kinds.end(), cr.kind) == kinds.end()) {
    std::string list;
    for (const auto& k : kinds) list += (list.empty() ? "" : ", ") + k;
    r.fail(node["kind"], "unknown certificate kind '" + cr.kind + "' (expected one of " + list + ")");
  }
  if (const auto c = node["constants"]) {
    r.require_map(c, "certificate.constants");
    static const std::set<std::string> known = {"c1", "c2", "c3", "c4", "a", "alpha", "beta", "M", "lambda",
                                                "M1", "M2", "kappa1", "kappa2", "gamma12", "gamma21"};
    for (const auto& kv : c) {
      const auto key = kv.first.as<std::string>();
      if (!known.count(key)) r.fail(kv.first, "unknown certificate constant '" + key + "'");
      cr.constants[key] = r.number(kv.second, "certificate.constants." + key);
    }
  }
  if (node["P"]) cr.P = r.matrix(node["P"], "certificate.P");
  if (node["allow_sub_unit"]) cr.allow_sub_unit = r.boolean(node["allow_sub_unit"], "certificate.allow_sub_unit");
  return cr;
}

}  // namespace

FuzzyNumber FuzzySpec::build(const LevelGrid& grid) const {
  if (shape == Shape::Crisp) return FuzzyNumber::crisp(values.at(0), grid);
  if (shape == Shape::Explicit) return FuzzyNumber(LevelGrid(levels), lower, upper).resample(grid);
  return FuzzyNumber::triangular(values.at(0), values.at(1), values.at(2), grid);
}

Scenario ScenarioConfig::build() const {
  Scenario s;
  s.q = q;
  for (const auto& [k, v] : parameters) {
    s.param_names.push_back(k);
    s.param_values.push_back(v);
  }
  if (rhs && matrix) throw DomainError("system needs exactly one of rhs, matrix");
  if (rhs) {
    s.system = ScalarSystem{Expr::parse(*rhs, s.param_names)};
  } else if (matrix) {
    s.system = LinearSystem{*matrix};
  } else {
    throw DomainError("system needs an rhs or a matrix");
  }
  if (levels < 1) throw DomainError("levels must be at least 1");
  const LevelGrid grid = LevelGrid::uniform(levels);
  for (const auto& f : initial) s.initial.push_back(f.build(grid));
  if (disturbance) s.disturbance = Expr::parse(*disturbance, s.param_names);
  if (tau || history) {
    if (!tau || !history) throw DomainError("delay needs both tau and history");
    DelaySpec d;
    d.tau = *tau;
    d.history.shape = history->shape;
    for (const auto& e : history->values) d.history.values.push_back(Expr::parse(e, s.param_names));
    s.delay = d;
  }
  s.noise = noise;
  s.horizon = horizon;
  s.step = step;
  s.memory_window = memory_window;
  s.validate();
  return s;
}

double CertificateRequest::get(const std::string& key, double fallback) const {
  const auto it = constants.find(key);
  return it == constants.end() ? fallback : it->second;
}

const std::vector<std::string>& certificate_kinds() {
  static const std::vector<std::string> kinds = {"none", "ml",    "iss",        "ultimate",
                                                 "lmi",  "delay", "small_gain", "stochastic"};
  return kinds;
}

Config parse_config(const std::string& text, const std::string& source) {
  Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source, e.mark.line >= 0 ? e.mark.line + 1 : 0, "YAML syntax error: " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source, 0, "config must be a mapping with a scenario section");
  r.check_keys(root, "config", {"name", "scenario", "certificate", "verify", "output", "sweep"});
  Config cfg;
  cfg.source = source;
  if (root["name"]) cfg.name = r.text(root["name"], "name");
  if (!root["scenario"]) r.fail(root, "scenario section is required");
  cfg.scenario = read_scenario(r, root["scenario"]);
  if (root["certificate"]) cfg.certificate = read_certificate(r, root["certificate"]);
  if (const auto v = root["verify"]) {
    r.check_keys(v, "verify", {"rtol", "atol"});
    if (v["rtol"]) cfg.verify.rtol = r.number(v["rtol"], "verify.rtol");
    if (v["atol"]) cfg.verify.atol = r.number(v["atol"], "verify.atol");
    if (cfg.verify.rtol < 0 || cfg.verify.atol < 0) r.fail(v, "verify tolerances must be nonnegative");
  }
  if (const auto o = root["output"]) {
    r.check_keys(o, "output", {"dir", "csv"});
    if (o["dir"]) cfg.output.dir = r.text(o["dir"], "output.dir");
    if (o["csv"]) cfg.output.csv = r.boolean(o["csv"], "output.csv");
  }
  if (const auto sw = root["sweep"]) {
    r.require_map(sw, "sweep");
    std::vector<SweepAxis> axes;
    for (const auto& kv : sw) {
      SweepAxis axis{kv.first.as<std::string>(), r.numbers(kv.second, "sweep." + kv.first.as<std::string>())};
      Config probe = cfg;
      try {
        if (!axis.values.empty()) apply_override(probe, axis.name, axis.values.front());
      } catch (const DomainError& e) {
        r.fail(kv.first, e.what());
      }
      axes.push_back(std::move(axis));
    }
    cfg.sweep = std::move(axes);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str(), path);
}

void apply_override(Config& config, const std::string& name, double value) {
  ScenarioConfig& sc = config.scenario;
  auto as_count = [&](double v) {
    if (!(v >= 0) || v != std::floor(v)) throw DomainError(name + " must be a nonnegative integer");
    return static_cast<std::size_t>(v);
  };
  auto need_noise = [&]() -> NoiseSpec& {
    if (!sc.noise) throw DomainError("'" + name + "' needs a noise section");
    return *sc.noise;
  };
  if (name == "q") {
    sc.q = value;
  } else if (name == "step") {
    sc.step = value;
  } else if (name == "horizon") {
    sc.horizon = value;
  } else if (name == "levels") {
    sc.levels = as_count(value);
  } else if (name == "sigma") {
    need_noise().sigma = value;
  } else if (name == "paths") {
    need_noise().paths = as_count(value);
  } else if (name == "seed") {
    need_noise().seed = as_count(value);
  } else if (name == "tau") {
    if (!sc.tau) throw DomainError("'tau' needs a delay section");
    sc.tau = value;
  } else if (name.rfind("certificate.", 0) == 0) {
    config.certificate.constants[name.substr(12)] = value;
  } else {
    for (auto& [k, v] : sc.parameters) {
      if (k == name) {
        v = value;
        return;
      }
    }
    throw DomainError("unknown sweep or override name '" + name + "'");
  }
}

}  // namespace mlfuzz
