#pragma once

// Closed-form and asymptotic free-fermion results, plus the real-space
// correlators of the tilted product state.

#include <functional>

namespace nrchain {

/// Modified Bessel function I_alpha(x), alpha in {0, 1}, x >= 0.
/// Power series up to x = 20, large-argument asymptotic series beyond.
double bessel_I(int alpha, double x);

/// exp(-x) I_alpha(x); finite for arbitrarily large x.
double bessel_I_scaled(int alpha, double x);

/// Free-fermion density for theta in {0, pi/4} (exact at all times).
/// Throws std::invalid_argument for any other theta.
double ff_density_closed(double theta, double phi, double kt);

/// Free-fermion density for arbitrary theta by adaptive Gauss-Kronrod
/// quadrature of the closed-form rapidity evolution.
double ff_density_quadrature(double theta, double phi, double kt, double abs_tol = 1e-12, double rel_tol = 1e-13);

struct FreeFermionAsymptotics {
  double chi = 0.0;
  /// Asymptotic density at the requested kt: the two-term expansion for
  /// theta in {0, pi/4}, the leading saddle-point term otherwise.
  double density = 0.0;
  bool two_term = false;
};

/// Late-time exponent and, where known, the two-term density expansion. Requires kt >= 10.
FreeFermionAsymptotics ff_asymptotic(double theta, double phi, double kt);

/// Real-space correlator <c_j^dagger c_l> of the product state for |j - l| = separation.
double initial_corr(double theta, long separation);

}  // namespace nrchain
