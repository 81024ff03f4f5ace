#pragma once

// Mittag-Leffler functions E_q(z) and E_{q,b}(z) for real arguments.
//
// Negative arguments (the decay regime) are the primary domain. Small |z|
// uses the power series with compensated summation in extended precision;
// larger |z| uses the integral representation of Gorenflo, Loutchko and
// Luchko evaluated with double-exponential quadrature. Positive arguments
// are served by the series up to z = 50.

namespace mlfuzz::mlf {

struct MLParams {
  double alpha = 1.0;
  double beta = 1.0;

  // Throws DomainError unless alpha > 0 and both fields are finite.
  void validate() const;
};

// Crossover between the series and the integral representation, measured on
// the scaled variable |z|^{1/q} (so it is exactly |z| when q = 1).
inline constexpr double kSeriesSwitch = 5.0;

// Largest positive argument accepted.
inline constexpr double kMaxPositiveArgument = 50.0;

double ml_one(double q, double z);
double ml_two(double q, double b, double z);

// Closed form of int_0^t (t-s)^{q-1} E_{q,q}(-kappa (t-s)^q) ds, which equals
// (1 - E_q(-kappa t^q)) / kappa.
double ml_conv_integral(double q, double kappa, double t);

// Gamma function (Boost.Math, accurate to a few ulp on (0, 172)).
double gamma(double x);

namespace detail {
// Compensated power series. Throws AccuracyError if the partial sums
// overflow or the series would need an impractical number of terms.
double series(double q, double b, double z);
// Integral representation, valid for 0 < q < 1 and z < 0; any real b is
// accepted and reduced with the three-term recurrence.
double integral(double q, double b, double z);
}  // namespace detail

}  // namespace mlfuzz::mlf
