#include "mlfuzz/fuzzy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlfuzz/error.hpp"

namespace mlfuzz {

namespace {

constexpr double kOrderingTolerance = 1e-12;

std::shared_ptr<const std::vector<double>> make_uniform(std::size_t intervals) {
  std::vector<double> levels(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k) {
    levels[k] = static_cast<double>(k) / static_cast<double>(intervals);
  }
  return std::make_shared<const std::vector<double>>(std::move(levels));
}

const std::shared_ptr<const std::vector<double>>& default_levels() {
  static const auto levels = make_uniform(10);
  return levels;
}

void require_same_grid(const FuzzyNumber& u, const FuzzyNumber& v) {
  if (!(u.grid() == v.grid())) {
    throw DomainError("fuzzy numbers live on different level grids (enable resampling to combine them)");
  }
}

// Brings v onto u's grid when allowed.
FuzzyNumber aligned(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy) {
  if (u.grid() == v.grid()) return v;
  if (policy == GridPolicy::Strict) require_same_grid(u, v);
  return v.resample(u.grid());
}

double interpolate(std::span<const double> xs, std::span<const double> ys, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  if (it == xs.begin()) return ys.front();
  if (it == xs.end()) return ys.back();
  const std::size_t i = static_cast<std::size_t>(it - xs.begin());
  const double w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + w * (ys[i] - ys[i - 1]);
}

}  // namespace

LevelGrid LevelGrid::uniform(std::size_t intervals) {
  if (intervals == 0) throw DomainError("level grid needs at least one interval");
  LevelGrid grid;
  if (intervals != 10) grid.levels_ = make_uniform(intervals);
  return grid;
}

LevelGrid::LevelGrid() : levels_(default_levels()) {}

LevelGrid::LevelGrid(std::vector<double> levels) {
  if (levels.size() < 2) throw DomainError("level grid needs at least two levels");
  if (levels.front() != 0.0 || levels.back() != 1.0) {
    throw DomainError("level grid must start at 0 and end at 1");
  }
  for (std::size_t k = 1; k < levels.size(); ++k) {
    if (!(levels[k] > levels[k - 1])) throw DomainError("level grid must be strictly increasing");
  }
  levels_ = std::make_shared<const std::vector<double>>(std::move(levels));
}

bool operator==(const LevelGrid& a, const LevelGrid& b) {
  return a.levels_ == b.levels_ || *a.levels_ == *b.levels_;
}

std::optional<std::string> validity_problem(std::span<const double> lower, std::span<const double> upper,
                                            double tol) {
  if (lower.size() != upper.size()) return "lower and upper arrays differ in length";
  if (lower.empty()) return "no levels";
  double scale = 0.0;
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k])) {
      return "non-finite endpoint at level index " + std::to_string(k);
    }
    scale = std::max({scale, std::fabs(lower[k]), std::fabs(upper[k])});
  }
  const double slack = tol * (1.0 + scale);
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (lower[k] > upper[k] + slack) {
      std::ostringstream os;
      os << "lower > upper at level index " << k << " (" << lower[k] << " > " << upper[k] << ")";
      return os.str();
    }
    if (k > 0 && lower[k] < lower[k - 1] - slack) {
      return "lower endpoints decrease at level index " + std::to_string(k) + " (cuts not nested)";
    }
    if (k > 0 && upper[k] > upper[k - 1] + slack) {
      return "upper endpoints increase at level index " + std::to_string(k) + " (cuts not nested)";
    }
  }
  return std::nullopt;
}

FuzzyNumber::FuzzyNumber(LevelGrid grid, std::vector<double> lower, std::vector<double> upper)
    : grid_(std::move(grid)), lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != grid_.size()) {
    throw DomainError("endpoint arrays must have one entry per level (" + std::to_string(grid_.size()) +
                      "), got " + std::to_string(lower_.size()));
  }
  if (auto problem = validity_problem(lower_, upper_, kOrderingTolerance)) {
    throw DomainError("invalid fuzzy number: " + *problem);
  }
}

FuzzyNumber FuzzyNumber::crisp(double value, const LevelGrid& grid) {
  std::vector<double> v(grid.size(), value);
  return FuzzyNumber(grid, v, v);
}

FuzzyNumber FuzzyNumber::triangular(double l, double m, double r, const LevelGrid& grid) {
  if (!(l <= m && m <= r)) throw DomainError("triangular fuzzy number needs l <= m <= r");
  std::vector<double> lo(grid.size());
  std::vector<double> hi(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double a = grid[k];
    lo[k] = l + a * (m - l);
    hi[k] = r - a * (r - m);
  }
  return FuzzyNumber(grid, std::move(lo), std::move(hi));
}

bool FuzzyNumber::is_crisp() const {
  for (std::size_t k = 0; k < size(); ++k) {
    if (lower_[k] != upper_[k] || lower_[k] != lower_[0]) return false;
  }
  return true;
}

FuzzyNumber FuzzyNumber::resample(const LevelGrid& target) const {
  if (target == grid_) return *this;
  std::vector<double> lo(target.size());
  std::vector<double> hi(target.size());
  for (std::size_t k = 0; k < target.size(); ++k) {
    lo[k] = interpolate(grid_.levels(), lower_, target[k]);
    hi[k] = interpolate(grid_.levels(), upper_, target[k]);
  }
  return FuzzyNumber(target, std::move(lo), std::move(hi));
}

bool operator==(const FuzzyNumber& a, const FuzzyNumber& b) {
  return a.grid_ == b.grid_ && a.lower_ == b.lower_ && a.upper_ == b.upper_;
}

double hausdorff(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy) {
  const FuzzyNumber w = aligned(u, v, policy);
  double d = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    d = std::max({d, std::fabs(u.lower()[k] - w.lower()[k]), std::fabs(u.upper()[k] - w.upper()[k])});
  }
  return d;
}

double norm(const FuzzyNumber& u) {
  double d = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    d = std::max({d, std::fabs(u.lower()[k]), std::fabs(u.upper()[k])});
  }
  return d;
}

std::optional<GhDifference> gh_diff(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy) {
  const FuzzyNumber w = aligned(u, v, policy);
  const std::size_t n = u.size();
  std::vector<double> dl(n);
  std::vector<double> du(n);
  for (std::size_t k = 0; k < n; ++k) {
    dl[k] = u.lower()[k] - w.lower()[k];
    du[k] = u.upper()[k] - w.upper()[k];
  }
  if (!validity_problem(dl, du)) {
    return GhDifference{FuzzyNumber(u.grid(), std::move(dl), std::move(du)), GhCase::I};
  }
  if (!validity_problem(du, dl)) {
    return GhDifference{FuzzyNumber(u.grid(), std::move(du), std::move(dl)), GhCase::II};
  }
  return std::nullopt;
}

FuzzyNumber add(const FuzzyNumber& u, const FuzzyNumber& v, GridPolicy policy) {
  const FuzzyNumber w = aligned(u, v, policy);
  std::vector<double> lo(u.size());
  std::vector<double> hi(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    lo[k] = u.lower()[k] + w.lower()[k];
    hi[k] = u.upper()[k] + w.upper()[k];
  }
  return FuzzyNumber(u.grid(), std::move(lo), std::move(hi));
}

FuzzyNumber scale(double c, const FuzzyNumber& u) {
  if (!std::isfinite(c)) throw DomainError("scale factor must be finite");
  std::vector<double> lo(u.size());
  std::vector<double> hi(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (c >= 0.0) {
      lo[k] = c * u.lower()[k];
      hi[k] = c * u.upper()[k];
    } else {
      lo[k] = c * u.upper()[k];
      hi[k] = c * u.lower()[k];
    }
  }
  return FuzzyNumber(u.grid(), std::move(lo), std::move(hi));
}

double state_norm(const FuzzyState& state) {
  if (state.empty()) return 0.0;
  if (state.size() == 1) return norm(state.front());
  double best = 0.0;
  const std::size_t levels = state.front().size();
  for (std::size_t k = 0; k < levels; ++k) {
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& c : state) {
      lo += c.lower()[k] * c.lower()[k];
      hi += c.upper()[k] * c.upper()[k];
    }
    best = std::max({best, lo, hi});
  }
  return std::sqrt(best);
}

double state_distance(const FuzzyState& a, const FuzzyState& b, GridPolicy policy) {
  if (a.size() != b.size()) throw DomainError("fuzzy states differ in dimension");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, hausdorff(a[i], b[i], policy));
  return d;
}

}  // namespace mlfuzz
