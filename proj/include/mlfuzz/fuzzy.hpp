#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mlfuzz {

// Membership levels 0 = a_0 < a_1 < ... < a_K = 1. Copies share storage;
// equality compares contents.
class LevelGrid {
 public:
  // K + 1 uniform levels {0, 1/K, ..., 1}.
  static LevelGrid uniform(std::size_t intervals = 10);

  LevelGrid();
  explicit LevelGrid(std::vector<double> levels);

  std::span<const double> levels() const { return *levels_; }
  std::size_t size() const { return levels_->size(); }
  double operator[](std::size_t k) const { return (*levels_)[k]; }

  friend bool operator==(const LevelGrid& a, const LevelGrid& b);

 private:
  std::shared_ptr<const std::vector<double>> levels_;
};

enum class GridPolicy { Strict, Resample };

// A fuzzy number stored as its alpha-cuts [lower[k], upper[k]] on a level grid.
class FuzzyNumber {
 public:
  FuzzyNumber(LevelGrid grid, std::vector<double> lower, std::vector<double> upper);

  static FuzzyNumber crisp(double value, const LevelGrid& grid = LevelGrid());
  // Level a maps to [l + a(m - l), r - a(r - m)].
  static FuzzyNumber triangular(double l, double m, double r, const LevelGrid& grid = LevelGrid());

  const LevelGrid& grid() const { return grid_; }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  std::size_t size() const { return lower_.size(); }

  double diameter(std::size_t k) const { return upper_[k] - lower_[k]; }
  bool is_crisp() const;

  // Linear interpolation in the membership level.
  FuzzyNumber resample(const LevelGrid& target) const;

  friend bool operator==(const FuzzyNumber& a, const FuzzyNumber& b);

 private:
  LevelGrid grid_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

// Describes why the arrays do not form a fuzzy number, or nullopt if they do.
// Ordering checks accept violations up to tol * (1 + max |entry|).
std::optional<std::string> validity_problem(std::span<const double> lower, std::span<const double> upper,
                                            double tol = 0.0);

// sup over levels of the interval Hausdorff distance.
double hausdorff(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy = GridPolicy::Strict);

// Distance to the crisp zero, max_k max(|lower[k]|, |upper[k]|).
double norm(const FuzzyNumber& u);

enum class GhCase { I, II };

struct GhDifference {
  FuzzyNumber value;
  GhCase which;
};

std::optional<GhDifference> gh_diff(const FuzzyNumber& u, const FuzzyNumber& v,
                                    GridPolicy policy = GridPolicy::Strict);

FuzzyNumber add(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy = GridPolicy::Strict);
FuzzyNumber scale(double c, const FuzzyNumber& u);

inline FuzzyNumber operator+(const FuzzyNumber& u, const FuzzyNumber& v) { return add(u, v); }
inline FuzzyNumber operator*(double c, const FuzzyNumber& u) { return scale(c, u); }

// A vector of fuzzy numbers sharing one grid, as produced by linear systems.
using FuzzyState = std::vector<FuzzyNumber>;

// Largest Euclidean norm of an endpoint vector over all levels; equals
// norm(u) for a single component.
double state_norm(const FuzzyState& state);

// Largest component-wise Hausdorff distance.
double state_distance(const FuzzyState& a, const FuzzyState& b, GridPolicy policy = GridPolicy::Strict);

}  // namespace mlfuzz
