#pragma once

namespace edd {

// Log-gamma, x > 0. Throws std::domain_error outside the domain.
double lgamma_pos(double x);

// Digamma psi(x), x > 0, accurate to ~1e-12 relative over [1e-3, 1e6].
// Throws std::domain_error outside the domain.
double digamma(double x);

}  // namespace edd
