#include "doctest.h"

#include <cmath>
#include <random>

#include "mlfuzz/error.hpp"
#include "mlfuzz/fuzzy.hpp"

using namespace mlfuzz;

namespace {

FuzzyNumber random_triangular(std::mt19937& rng, const LevelGrid& grid = LevelGrid()) {
  std::uniform_real_distribution<double> c(-5.0, 5.0), w(0.0, 2.0);
  const double m = c(rng);
  return FuzzyNumber::triangular(m - w(rng), m, m + w(rng), grid);
}

}  // namespace

TEST_CASE("triangular alpha-cuts interpolate linearly") {
  const auto u = FuzzyNumber::triangular(1.0, 2.0, 4.0, LevelGrid::uniform(4));
  CHECK(u.size() == 5);
  CHECK(u.lower()[0] == 1.0);
  CHECK(u.upper()[0] == 4.0);
  CHECK(u.lower()[2] == doctest::Approx(1.5));
  CHECK(u.upper()[2] == doctest::Approx(3.0));
  CHECK(u.lower()[4] == 2.0);
  CHECK(u.upper()[4] == 2.0);
  CHECK_FALSE(u.is_crisp());
  CHECK(FuzzyNumber::crisp(3.0).is_crisp());
}

TEST_CASE("invalid endpoint arrays are rejected") {
  const LevelGrid g = LevelGrid::uniform(2);
  CHECK_THROWS_AS(FuzzyNumber(g, {0.0, 1.0, 0.5}, {2.0, 1.5, 0.8}), DomainError);  // lower decreases
  CHECK_THROWS_AS(FuzzyNumber(g, {0.0, 0.5, 1.0}, {2.0, 0.4, 1.0}), DomainError);  // lower > upper
  CHECK_THROWS_AS(FuzzyNumber(g, {0.0, 0.5}, {1.0, 0.6}), DomainError);            // wrong length
  CHECK_THROWS_AS(FuzzyNumber::triangular(2.0, 1.0, 3.0), DomainError);
  CHECK(validity_problem(std::vector<double>{0.0, 0.5, 1.0}, std::vector<double>{2.0, 1.5, 1.0}) == std::nullopt);
  CHECK(validity_problem(std::vector<double>{0.0, NAN}, std::vector<double>{1.0, 1.0}).has_value());
}

TEST_CASE("level grid validation") {
  CHECK_THROWS_AS(LevelGrid(std::vector<double>{0.0}), DomainError);
  CHECK_THROWS_AS(LevelGrid(std::vector<double>{0.1, 1.0}), DomainError);
  CHECK_THROWS_AS(LevelGrid(std::vector<double>{0.0, 0.5, 0.5, 1.0}), DomainError);
  CHECK_THROWS_AS(LevelGrid::uniform(0), DomainError);
  CHECK(LevelGrid::uniform(10) == LevelGrid());
}

TEST_CASE("Hausdorff distance is a metric on random samples") {
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto u = random_triangular(rng), v = random_triangular(rng), w = random_triangular(rng);
    CHECK(hausdorff(u, u) == 0.0);
    CHECK(hausdorff(u, v) == hausdorff(v, u));
    CHECK(hausdorff(u, w) <= hausdorff(u, v) + hausdorff(v, w) + 1e-12);
    CHECK(norm(u) == hausdorff(u, FuzzyNumber::crisp(0.0)));
  }
}

TEST_CASE("addition and scaling follow interval arithmetic") {
  std::mt19937 rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto u = random_triangular(rng), v = random_triangular(rng);
    const auto s = u + v;
    for (std::size_t k = 0; k < s.size(); ++k) {
      CHECK(s.lower()[k] == doctest::Approx(u.lower()[k] + v.lower()[k]));
      CHECK(s.upper()[k] == doctest::Approx(u.upper()[k] + v.upper()[k]));
    }
    const auto n = -2.0 * u;
    CHECK(n.lower()[0] == doctest::Approx(-2.0 * u.upper()[0]));
    CHECK(n.upper()[0] == doctest::Approx(-2.0 * u.lower()[0]));
    // Hausdorff distance is translation invariant and absolutely homogeneous.
    CHECK(hausdorff(u + s, v + s) == doctest::Approx(hausdorff(u, v)));
    CHECK(hausdorff(-3.0 * u, -3.0 * v) == doctest::Approx(3.0 * hausdorff(u, v)));
  }
}

TEST_CASE("gH-difference inverts addition") {
  std::mt19937 rng(9);
  for (int i = 0; i < 100; ++i) {
    const auto u = random_triangular(rng), v = random_triangular(rng);
    const auto d = gh_diff(u + v, v);
    REQUIRE(d.has_value());
    CHECK(d->which == GhCase::I);
    CHECK(hausdorff(d->value, u) < 1e-12);
    // The second case: v = u + (-1) w when v has the wider spread.
    const auto back = gh_diff(v, u + v);
    REQUIRE(back.has_value());
    CHECK(back->which == GhCase::II);
    CHECK(hausdorff(back->value, -1.0 * u) < 1e-12);
  }
  const auto u = FuzzyNumber::triangular(0.0, 1.0, 2.0);
  const auto z = gh_diff(u, u);
  REQUIRE(z.has_value());
  CHECK(z->value.is_crisp());
  CHECK(norm(z->value) == 0.0);
}

TEST_CASE("gH-difference may not exist") {
  const LevelGrid g = LevelGrid::uniform(2);
  // Spreads that cross: neither case yields nested cuts.
  const FuzzyNumber u(g, {0.0, 0.9, 1.0}, {2.0, 1.1, 1.0});
  const FuzzyNumber v(g, {0.0, 0.2, 1.0}, {2.0, 1.8, 1.0});
  CHECK_FALSE(gh_diff(u, v).has_value());
}

TEST_CASE("different grids need explicit resampling") {
  const auto u = FuzzyNumber::triangular(0.0, 1.0, 2.0, LevelGrid::uniform(4));
  const auto v = FuzzyNumber::triangular(0.0, 1.0, 2.0, LevelGrid::uniform(8));
  CHECK_THROWS_AS(hausdorff(u, v), DomainError);
  CHECK(hausdorff(u, v, GridPolicy::Resample) < 1e-14);
  CHECK(v.resample(LevelGrid::uniform(4)) == u);
}

TEST_CASE("state norm") {
  const auto x = FuzzyNumber::triangular(-1.0, 0.0, 3.0);
  CHECK(state_norm({x}) == norm(x));
  const auto y = FuzzyNumber::crisp(4.0);
  CHECK(state_norm({x, y}) == doctest::Approx(5.0));
  CHECK(state_distance({x, y}, {x, FuzzyNumber::crisp(1.0)}) == doctest::Approx(3.0));
}

TEST_CASE("reference examples") {
  CHECK(hausdorff(FuzzyNumber::crisp(3.0), FuzzyNumber::crisp(-1.0)) == 4.0);
  const auto tri = FuzzyNumber::triangular(0.0, 1.0, 2.0);
  // Brute force over the grid: max over levels of max(a, 2 - a).
  double brute = 0.0;
  for (double a : tri.grid().levels()) brute = std::max({brute, a, 2.0 - a});
  CHECK(hausdorff(tri, FuzzyNumber::crisp(0.0)) == brute);
  CHECK(brute == 2.0);

  const auto same = gh_diff(tri, tri);
  REQUIRE(same.has_value());
  CHECK(same->which == GhCase::I);
  CHECK(same->value == FuzzyNumber::crisp(0.0));
  const auto d = gh_diff(FuzzyNumber::crisp(5.0), FuzzyNumber::crisp(2.0));
  REQUIRE(d.has_value());
  CHECK(d->value == FuzzyNumber::crisp(3.0));
  const auto half = FuzzyNumber::triangular(0.0, 0.5, 1.0);
  const auto w = gh_diff(tri, half);
  REQUIRE(w.has_value());
  CHECK(w->which == GhCase::I);
  CHECK(hausdorff(w->value, half) < 1e-15);

  CHECK(tri + FuzzyNumber::crisp(0.0) == tri);
  CHECK(hausdorff(-1.0 * tri, FuzzyNumber::triangular(-2.0, -1.0, 0.0)) < 1e-15);
  CHECK(hausdorff(tri + FuzzyNumber::crisp(1.0), FuzzyNumber::triangular(1.0, 2.0, 3.0)) < 1e-15);
}

TEST_CASE("case (i) gH-difference reproduces u exactly") {
  std::mt19937 rng(21);
  int case_one = 0;
  for (int i = 0; i < 500; ++i) {
    const auto u = random_triangular(rng), v = random_triangular(rng);
    const auto d = gh_diff(u, v);
    if (!d || d->which != GhCase::I) continue;
    ++case_one;
    const auto back = v + d->value;
    for (std::size_t k = 0; k < u.size(); ++k) {
      CHECK(back.lower()[k] == doctest::Approx(u.lower()[k]).epsilon(1e-15).scale(10));
      CHECK(back.upper()[k] == doctest::Approx(u.upper()[k]).epsilon(1e-15).scale(10));
    }
  }
  CHECK(case_one > 50);
}

TEST_CASE("metric axioms on 1000 random triples with shared arrays") {
  std::mt19937 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto u = random_triangular(rng), v = random_triangular(rng), w = random_triangular(rng);
    CHECK(hausdorff(u, v) == hausdorff(v, u));
    CHECK(hausdorff(u, w) <= hausdorff(u, v) + hausdorff(v, w) + 1e-12);
    CHECK((hausdorff(u, v) == 0.0) == (u == v));
    const auto c = FuzzyNumber::crisp(std::uniform_real_distribution<double>(-3, 3)(rng));
    CHECK(hausdorff(u + c, v + c) == doctest::Approx(hausdorff(u, v)).epsilon(1e-12));
  }
}
