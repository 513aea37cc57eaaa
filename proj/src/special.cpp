#include "edd/special.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace edd {

double lgamma_pos(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("lgamma: x must be positive, got " + std::to_string(x));
  }
  return std::lgamma(x);
}

double digamma(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("digamma: x must be positive, got " + std::to_string(x));
  }
  // Recurrence psi(x) = psi(x+1) - 1/x until x is large enough for the
  // asymptotic series psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n).
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms up to B_14; truncation error < 1e-14 for x >= 10.
  double series = inv2 * (1.0 / 12.0 -
                  inv2 * (1.0 / 120.0 -
                  inv2 * (1.0 / 252.0 -
                  inv2 * (1.0 / 240.0 -
                  inv2 * (1.0 / 132.0 -
                  inv2 * (691.0 / 32760.0 -
                  inv2 * (1.0 / 12.0)))))));
  return acc + std::log(x) - 0.5 * inv - series;
}

}  // namespace edd
