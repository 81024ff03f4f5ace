#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mlfuzz/certify.hpp"
#include "mlfuzz/config.hpp"
#include "mlfuzz/solver.hpp"

namespace mlfuzz {

struct EnvelopeReport {
  std::size_t n_points = 0;
  std::size_t violations = 0;
  // Largest (norm - threshold) / threshold with threshold = B (1 + rtol) + atol.
  double max_excess = 0.0;
  std::optional<double> first_violation_t;
  bool pass = true;
  std::vector<double> margins;  // B(t) - norm(t)
};

// Pointwise check over the nodes with t >= 0. When running_sup is given (one
// entry per node of the trajectory) an input-driven envelope uses it in place
// of its constant offset.
EnvelopeReport verify_envelope(const FuzzyTrajectory& traj, const Envelope& env, double rtol = 0.02,
                               double atol = 1e-9, std::span<const double> running_sup = {});

// Moments get 3 standard errors of slack on the bound side.
EnvelopeReport verify_envelope(const MomentTrajectory& traj, const Envelope& env, double rtol = 0.02,
                               double atol = 1e-9);

// Shared core: values[i] against bound[i] (1 + rtol) + atol.
EnvelopeReport compare_pointwise(std::span<const double> times, std::span<const double> values,
                                 std::span<const double> bounds, double rtol, double atol);

// Checks a norm series (for example read back from CSV) against the
// certificate requested by a config. Nodes with t < 0 are skipped.
EnvelopeReport verify_series(const Config& config, std::span<const double> times, std::span<const double> norms);

enum class RunStatus { Pass, Fail, NotApplicable };

const char* to_string(RunStatus status);

struct RunReport {
  RunStatus status = RunStatus::Fail;
  // Blocks in report order: scenario, certificate, verification, timing, warnings.
  nlohmann::ordered_json data;
  std::optional<FuzzyTrajectory> trajectory;
  std::optional<MomentTrajectory> moments;

  std::string to_text() const;
  std::string to_json() const;
};

struct RunOptions {
  unsigned workers = 1;
};

// Simulates, certifies and verifies. Solver failures propagate as
// NumericalError; certificates that do not apply give NotApplicable status.
RunReport run_scenario(const Config& config, const RunOptions& options = {});

struct SweepRow {
  std::size_t index = 0;
  std::vector<double> values;  // one per axis
  std::string status;          // pass, fail, not-applicable, NonFinite, OrderingViolation, error
  std::string message;
  std::optional<double> max_excess;
};

struct SweepResult {
  std::vector<std::string> axes;
  std::vector<SweepRow> rows;
  std::size_t passes = 0;

  // nullopt for an empty grid.
  std::optional<double> pass_rate() const;
  std::string to_text() const;
  std::string to_csv() const;
};

inline constexpr std::size_t kMaxSweepRows = 10000;

// Runs every combination of the config's sweep axes (first axis slowest).
// Row failures are recorded, never thrown.
SweepResult sweep(const Config& config, unsigned workers = 1);

}  // namespace mlfuzz
