#include "doctest.h"

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mlfuzz/error.hpp"
#include "mlfuzz/mlf.hpp"

using namespace mlfuzz;

namespace {

struct Golden {
  double q, b, z, value;
};

// Generated by tests/oracles/mlf_golden.py.
constexpr Golden kGolden[] = {
    {0.5, 1.0, -1.0, 0.42758357615580700441},
    {0.5, 0.5, -1.0, 0.13660600739194928254},
    {0.3, 1.0, -2.0, 0.29023222616787535504},
    {0.3, 0.3, -20.0, 0.00054462489804465207853},
    {0.7, 1.0, -0.3, 0.73154067570065076036},
    {0.9, 1.0, -50.0, 0.0021753530768569760498},
    {0.9, 0.9, -8.0, 0.0025808143045736155553},
    {0.99, 1.0, -30.0, 0.00035975605168217239754},
    {0.6, 1.6, -7.0, 0.13324926760152452767},
    {0.25, 1.25, -3.0, 0.26033185747986440025},
    {1.0, 0.5, -12.0, -0.027380877150461570225},
    {1.0, 1.5, -12.0, 0.049297538391518154764},
    {0.8, 1.0, 3.0, 64.751787985702501649},
    {0.4, 1.0, 2.0, 715.2595054113189376},
    {0.75, 0.75, -1000.0, 2.0728546309097819553e-7},
    {0.391, 0.387, -0.0165, 0.42220836321561197591},
    {0.839, 0.279, -0.0182, 0.29075384174241804795},
    {0.557, 0.557, -0.7617, 0.20687631953345667695},
    {0.317, 1.0, -52.5817, 0.014196048430519060561},
    {0.211, 0.524, -4.2023, 0.076317202193674094382},
    {0.156, 1.0, -247.2566, 0.0036043313219106874857},
    {0.142, 0.142, -0.7694, 0.046129268436978261929},
    {0.587, 1.185, -47.051, 0.014220163957226283628},
    {0.263, 1.205, -0.0701, 1.0165746917154443986},
    {0.188, 1.453, -0.0185, 1.1089078959058024552},
    {0.285, 0.285, -31.4434, 0.00021734329690643703675},
    {0.519, 0.519, -0.2233, 0.4039648468109443266},
    {0.815, 1.0, -0.0234, 0.97535566999247437856},
    {0.37, 0.37, -19.1648, 0.000676423827191633644},
    {0.359, 1.0, -2.0123, 0.27923837554594513135},
    {0.248, 0.248, -0.79, 0.080250021277069998914},
    {0.966, 0.247, -3.7898, -0.12767314340850547295},
    {0.888, 0.696, -0.3765, 0.43669180113528982328},
    {0.547, 1.0, -60.2358, 0.0085147383433288021356},
    {0.95, 1.001, -0.0196, 0.98079047197630890214},
    {0.758, 0.688, -294.3959, -0.00022561649087598132059},
    {0.84, 0.84, -98.1028, 1.5463907436595141625e-5},
    {0.412, 0.412, -0.057, 0.41795974980336775265},
    {0.205, 0.205, -0.0382, 0.20688359001580092531},
    {0.323, 0.323, -0.023, 0.34518428939114433011},
};

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

}  // namespace

TEST_CASE("golden values from high-precision references") {
  for (const auto& g : kGolden) {
    CAPTURE(g.q);
    CAPTURE(g.b);
    CAPTURE(g.z);
    const double v = g.b == 1.0 ? mlf::ml_one(g.q, g.z) : mlf::ml_two(g.q, g.b, g.z);
    CHECK(rel(v, g.value) < 1e-10);
  }
}

TEST_CASE("ml_one(0.5, -1) matches the CLI example to 12 digits") {
  CHECK(mlf::ml_one(0.5, -1.0) == doctest::Approx(0.427583576156).epsilon(1e-12));
}

TEST_CASE("half order reduces to exp(x^2) erfc(x)") {
  for (double x : {1e-3, 0.1, 0.5, 1.0, 2.5, 4.0, 8.0, 15.0, 25.0}) {
    CAPTURE(x);
    const double expected = x < 20.0 ? std::exp(x * x) * std::erfc(x) : 1.0 / (x * std::sqrt(M_PI)) * (1.0 - 0.5 / (x * x) + 0.75 / std::pow(x, 4));
    CHECK(rel(mlf::ml_one(0.5, -x), expected) < (x < 20.0 ? 1e-12 : 1e-6));
  }
}

TEST_CASE("order one is the exponential") {
  for (double z : {-40.0, -3.0, -0.5, 0.0, 1.0, 10.0}) CHECK(rel(mlf::ml_one(1.0, z), std::exp(z)) < 1e-13);
  CHECK(rel(mlf::ml_two(1.0, 2.0, -2.0), (1.0 - std::exp(-2.0)) / 2.0) < 1e-13);
}

TEST_CASE("three-term recurrence holds across the switch point") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uq(0.1, 1.0), ub(0.0, 1.0), ulog(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const double q = uq(rng);
    const double b = 0.2 + ub(rng) * (1.8 - q);
    const double z = -std::pow(10.0, ulog(rng));
    const double lhs = mlf::ml_two(q, b, z);
    const double rhs = 1.0 / mlf::gamma(b) + z * mlf::ml_two(q, b + q, z);
    const double scale = std::fabs(lhs) + std::fabs(1.0 / mlf::gamma(b));
    CAPTURE(q);
    CAPTURE(b);
    CAPTURE(z);
    CHECK(std::fabs(lhs - rhs) < 1e-10 * scale);
  }
}

TEST_CASE("E_q(-x) is completely monotone: positive and decreasing") {
  for (double q : {0.2, 0.5, 0.8, 0.95}) {
    double prev = 1.0;
    for (double x = 0.01; x < 500.0; x *= 1.3) {
      const double v = mlf::ml_one(q, -x);
      CHECK(v > 0.0);
      CHECK(v <= prev);
      prev = v;
    }
  }
}

TEST_CASE("value at zero is 1 / Gamma(b)") {
  CHECK(mlf::ml_one(0.3, 0.0) == 1.0);
  CHECK(rel(mlf::ml_two(0.7, 1.5, 0.0), 1.0 / std::tgamma(1.5)) < 1e-15);
}

TEST_CASE("convolution integral matches adaptive quadrature") {
  using boost::math::quadrature::gauss_kronrod;
  for (double q : {0.3, 0.6, 0.9}) {
    for (double kappa : {0.5, 2.0}) {
      for (double t : {0.5, 3.0}) {
        // Substituting r = (t - s)^q removes the endpoint singularity.
        auto f = [&](double r) { return mlf::ml_two(q, q, -kappa * r) / q; };
        const double quad = gauss_kronrod<double, 61>::integrate(f, 0.0, std::pow(t, q), 15, 1e-13);
        CAPTURE(q);
        CAPTURE(kappa);
        CAPTURE(t);
        CHECK(rel(mlf::ml_conv_integral(q, kappa, t), quad) < 1e-9);
      }
    }
  }
}

TEST_CASE("domain errors") {
  CHECK_THROWS_AS(mlf::ml_one(0.0, -1.0), DomainError);
  CHECK_THROWS_AS(mlf::ml_one(1.5, -1.0), DomainError);
  CHECK_THROWS_AS(mlf::ml_one(0.5, std::nan("")), DomainError);
  CHECK_THROWS_AS(mlf::ml_conv_integral(0.5, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(mlf::ml_one(0.5, 1e6), Error);
}
