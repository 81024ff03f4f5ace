#include "mlfuzz/mlf.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/sin_pi.hpp>
#include <boost/math/special_functions/cos_pi.hpp>

#include "mlfuzz/error.hpp"

namespace mlfuzz::mlf {

namespace {

using ld = long double;

constexpr double kPi = boost::math::constants::pi<double>();
// Beyond this |z| the algebraic asymptotic expansion is used directly.
constexpr double kAsymptoticArgument = 1e8;
// The integrand of the integral representation is cut where exp(-r^{1/q})
// drops below e^{-80}.
constexpr double kExpCutoff = 80.0;
constexpr double kQuadTolerance = 1e-14;

// Boost 1.74 declares integrate() with a const-qualified return type rather
// than as a const member, so each thread keeps its own mutable integrator.
boost::math::quadrature::tanh_sinh<double>& integrator() {
  thread_local boost::math::quadrature::tanh_sinh<double> instance;
  return instance;
}

void check_order(double q) {
  if (!(q > 0.0 && q <= 1.0)) {
    throw DomainError("Mittag-Leffler order q must lie in (0, 1], got " + std::to_string(q));
  }
}

void check_argument(double z) {
  if (!std::isfinite(z)) throw DomainError("Mittag-Leffler argument must be finite");
}

bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::floor(x); }

double rgamma(double x) {
  if (is_nonpositive_integer(x)) return 0.0;
  return 1.0 / boost::math::tgamma(x);
}

// E_{q,b}(z) ~ -sum_{k>=1} z^{-k} / Gamma(b - qk) for z -> -infinity.
double asymptotic(double q, double b, double z) {
  ld sum = 0.0L;
  ld zk = 1.0L;
  for (int k = 1; k <= 6; ++k) {
    zk /= static_cast<ld>(z);
    sum -= zk * static_cast<ld>(rgamma(b - q * k));
  }
  return static_cast<double>(sum);
}

// Singular endpoints are always placed at 0 so that abscissae near them are
// represented exactly. The two-argument overload is used because the
// one-argument one in Boost 1.74 can evaluate exactly at a nonzero endpoint.
template <class F>
double quad(F f, double a, double b) {
  double err = 0.0;
  double l1 = 0.0;
  auto g = [&f](double x, double) { return f(x); };
  double value = integrator().integrate(g, a, b, kQuadTolerance, &err, &l1);
  if (!std::isfinite(value) || err > 1e-11 * (l1 + std::numeric_limits<double>::min())) {
    throw AccuracyError("Mittag-Leffler quadrature did not converge");
  }
  return value;
}

// q = 1 and b not in {1, 2}: E_{1,b}(z) as a finite integral over [0, 1],
// written in s = 1 - t.
double order_one_integral(double b, double z) {
  if (b > 1.0) {
    auto f = [b, z](double s) { return std::exp(z * (1.0 - s)) * std::pow(s, b - 2.0); };
    return quad(f, 0.0, 1.0) * rgamma(b - 1.0);
  }
  auto f = [b, z](double s) {
    return std::exp(z * (1.0 - s)) * std::pow(s, b - 1.0) * (b + z * (1.0 - s));
  };
  return quad(f, 0.0, 1.0) * rgamma(b);
}

}  // namespace

void MLParams::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta)) {
    throw DomainError("Mittag-Leffler parameters must be finite");
  }
  if (!(alpha > 0.0)) throw DomainError("Mittag-Leffler alpha must be positive");
}

double gamma(double x) { return boost::math::tgamma(x); }

namespace detail {

double series(double q, double b, double z) {
  if (z == 0.0) return rgamma(b);
  const ld lz = std::log(std::fabs(static_cast<ld>(z)));
  const bool negative = z < 0.0;
  // Neumaier summation in extended precision.
  ld sum = 0.0L;
  ld comp = 0.0L;
  ld prev_mag = 0.0L;
  constexpr int kMaxTerms = 20000;
  for (int k = 0; k < kMaxTerms; ++k) {
    const ld x = static_cast<ld>(q) * k + static_cast<ld>(b);
    ld term;
    if (x <= 0.0L && x == std::floor(x)) {
      term = 0.0L;
    } else {
      const ld log_mag = k * lz - boost::math::lgamma(x);
      if (log_mag > 11000.0L) throw AccuracyError("Mittag-Leffler series overflows");
      term = std::exp(log_mag);
      if (x < 0.0L && static_cast<long long>(std::floor(x)) % 2 != 0) term = -term;
      if (negative && (k % 2 == 1)) term = -term;
    }
    const ld t = sum + term;
    if (std::fabs(sum) >= std::fabs(term)) {
      comp += (sum - t) + term;
    } else {
      comp += (term - t) + sum;
    }
    sum = t;
    const ld mag = std::fabs(term);
    const ld total = std::fabs(sum + comp);
    if (k > 2 && mag < prev_mag && mag <= 1e-22L * total) {
      const ld result = sum + comp;
      if (std::fabs(result) > std::numeric_limits<double>::max()) {
        throw AccuracyError("Mittag-Leffler value exceeds the double range");
      }
      return static_cast<double>(result);
    }
    prev_mag = mag;
  }
  throw AccuracyError("Mittag-Leffler series did not converge");
}

double integral(double q, double b, double z) {
  if (!(q > 0.0 && q < 1.0) || !(z < 0.0)) {
    throw DomainError("integral representation needs 0 < q < 1 and z < 0");
  }
  // Keep the kernel's power of r nonnegative: b > 1 makes r^{(1-b)/q}
  // singular at the origin.
  if (b > 1.0) {
    return (integral(q, b - q, z) - rgamma(b - q)) / z;
  }
  const double x = -z;
  const double inv_q = 1.0 / q;
  const double s1 = boost::math::sin_pi(1.0 - b);
  const double s2 = boost::math::sin_pi(1.0 - b + q);
  const double cq = boost::math::cos_pi(q);
  const double sq = boost::math::sin_pi(q);
  const double pre = 1.0 / (kPi * q);
  const double expo = (1.0 - b) / q;

  // Kernel without the Lorentzian denominator (r + x cos(pi q))^2 + (x sin(pi q))^2.
  auto numerator = [=](double r) {
    return pre * std::pow(r, expo) * std::exp(-std::pow(r, inv_q)) * (r * s1 + x * s2);
  };
  auto kernel = [=](double r) {
    const double d = r + x * cq;
    return numerator(r) / (d * d + x * x * sq * sq);
  };

  const double upper = std::pow(kExpCutoff, q);
  const double peak = -x * cq;
  const double width = x * sq;
  constexpr double kSpan = 20.0;

  if (!(peak > 0.0) || peak >= upper || width * kSpan >= peak) {
    return quad(kernel, 0.0, upper);
  }
  const double lo = peak - kSpan * width;
  const double hi = std::min(upper, peak + kSpan * width);
  // On [lo, hi] substitute r = peak + width*tan(theta) to flatten the peak.
  auto flattened = [=](double theta) {
    const double r = peak + width * std::tan(theta);
    return numerator(r) / width;
  };
  double value = quad(kernel, 0.0, lo);
  value += quad(flattened, std::atan((lo - peak) / width), std::atan((hi - peak) / width));
  if (hi < upper) value += quad(kernel, hi, upper);
  return value;
}

}  // namespace detail

double ml_two(double q, double b, double z) {
  check_order(q);
  check_argument(z);
  if (!(b > 0.0 && b <= 2.0) || !std::isfinite(b)) {
    throw DomainError("Mittag-Leffler second parameter must lie in (0, 2], got " + std::to_string(b));
  }
  if (z > kMaxPositiveArgument) {
    throw AccuracyError("accuracy not guaranteed for E_{q,b}(z) with z > 50 (got " + std::to_string(z) +
                        ")");
  }
  if (z == 0.0) return rgamma(b);
  if (q == 1.0) {
    if (b == 1.0) return std::exp(z);
    if (b == 2.0) return std::expm1(z) / z;
  }
  if (z > 0.0) return detail::series(q, b, z);
  const double scaled = std::pow(-z, 1.0 / q);
  if (scaled <= kSeriesSwitch) return detail::series(q, b, z);
  if (-z >= kAsymptoticArgument) return asymptotic(q, b, z);
  if (q == 1.0) return order_one_integral(b, z);
  return detail::integral(q, b, z);
}

double ml_one(double q, double z) { return ml_two(q, 1.0, z); }

double ml_conv_integral(double q, double kappa, double t) {
  check_order(q);
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw DomainError("kappa must be positive and finite");
  if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("t must be finite and nonnegative");
  if (t == 0.0) return 0.0;
  const double tq = std::pow(t, q);
  const double z = -kappa * tq;
  // 1 - E_q(z) = -z E_{q,q+1}(z); the right side avoids cancellation for small |z|.
  if (-z <= 1.0) return tq * ml_two(q, q + 1.0, z);
  return (1.0 - ml_one(q, z)) / kappa;
}

}  // namespace mlfuzz::mlf
