#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlfuzz/fuzzy.hpp"
#include "mlfuzz/solver.hpp"

namespace mlfuzz {

// A crisp value, a triangular (l, m, r) fuzzy number, or explicit alpha-cuts
// (resampled onto the scenario's level grid when the grids differ).
struct FuzzySpec {
  enum class Shape { Crisp, Triangular, Explicit };
  Shape shape = Shape::Crisp;
  std::vector<double> values;
  std::vector<double> levels, lower, upper;  // Explicit

  FuzzyNumber build(const LevelGrid& grid) const;
};

struct HistoryConfig {
  HistorySpec::Shape shape = HistorySpec::Shape::Crisp;
  std::vector<std::string> values;  // expressions in t
};

// Scenario as written in a config file; expressions are kept as text so
// that overrides can be applied before parsing.
struct ScenarioConfig {
  double q = 1.0;
  std::optional<std::string> rhs;
  std::optional<Eigen::MatrixXd> matrix;
  std::vector<std::pair<std::string, double>> parameters;
  std::vector<FuzzySpec> initial;
  std::size_t levels = 10;
  std::optional<std::string> disturbance;
  std::optional<double> tau;
  std::optional<HistoryConfig> history;
  std::optional<NoiseSpec> noise;
  double horizon = 1.0;
  double step = 0.01;
  std::optional<std::size_t> memory_window;

  // Parses every expression and validates the result. Throws ParseError or
  // DomainError.
  Scenario build() const;
};

struct CertificateRequest {
  std::string kind = "none";
  std::map<std::string, double> constants;
  std::optional<Eigen::MatrixXd> P;
  bool allow_sub_unit = false;

  double get(const std::string& key, double fallback) const;
};

struct VerifySettings {
  double rtol = 0.02;
  double atol = 1e-9;
};

struct OutputSettings {
  std::string dir;
  bool csv = true;
};

struct SweepAxis {
  std::string name;
  std::vector<double> values;
};

struct Config {
  std::string name;
  std::string source;  // file name used in error messages
  ScenarioConfig scenario;
  CertificateRequest certificate;
  VerifySettings verify;
  OutputSettings output;
  std::optional<std::vector<SweepAxis>> sweep;
};

// Certificate kinds understood by the harness.
const std::vector<std::string>& certificate_kinds();

// Throws ConfigError citing file:line for schema problems, unknown keys and
// malformed expressions.
Config parse_config(const std::string& text, const std::string& source = "<config>");
Config load_config(const std::string& path);

// Sets a sweepable quantity: q, step, horizon, levels, sigma, paths, seed,
// tau, a scenario parameter name, or certificate.<constant>. Throws
// DomainError for unknown names.
void apply_override(Config& config, const std::string& name, double value);

}  // namespace mlfuzz
