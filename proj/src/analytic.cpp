#include "nrchain/analytic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nrchain {

namespace {

constexpr double kSwitchover = 20.0;

void check_order(int alpha) {
  if (alpha != 0 && alpha != 1) throw std::invalid_argument("bessel_I: only orders 0 and 1 are supported");
}

// sum_k (x/2)^(2k+alpha) / (k! (k+alpha)!)
double series(int alpha, double x) {
  const double q = 0.25 * x * x;
  double term = alpha == 0 ? 1.0 : 0.5 * x;
  double sum = term;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k + alpha));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Hankel large-argument series without the exp(x)/sqrt(2 pi x) prefactor.
double asymptotic_tail(int alpha, double x) {
  const double mu = 4.0 * alpha * alpha;
  double term = 1.0;
  double sum = 1.0;
  double prev = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double odd = 2.0 * k - 1.0;
    term *= -(mu - odd * odd) / (static_cast<double>(k) * 8.0 * x);
    if (std::abs(term) > std::abs(prev)) break;  // series starts diverging
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    prev = term;
  }
  return sum;
}

bool is_quarter_pi(double theta) { return std::abs(theta - std::numbers::pi / 4) < 1e-12; }

double rho0_at(double theta, double k) {
  if (theta == 0.0) return 1.0;
  const double c2t = std::cos(2.0 * theta);
  const double ck = std::cos(k);
  return 2.0 * std::pow(std::cos(theta), 4) * (1.0 + ck) / (1.0 + 2.0 * ck * c2t + c2t * c2t);
}

}  // namespace

double bessel_I(int alpha, double x) {
  check_order(alpha);
  if (!(x >= 0.0)) throw std::domain_error("bessel_I: argument must be >= 0");
  if (x <= kSwitchover) return series(alpha, x);
  return std::exp(x) / std::sqrt(2.0 * std::numbers::pi * x) * asymptotic_tail(alpha, x);
}

double bessel_I_scaled(int alpha, double x) {
  check_order(alpha);
  if (!(x >= 0.0)) throw std::domain_error("bessel_I_scaled: argument must be >= 0");
  if (x <= kSwitchover) return std::exp(-x) * series(alpha, x);
  return asymptotic_tail(alpha, x) / std::sqrt(2.0 * std::numbers::pi * x);
}

double ff_density_closed(double theta, double phi, double kt) {
  if (!(kt >= 0.0)) throw std::domain_error("ff_density_closed: kt must be >= 0");
  const double x = 2.0 * kt;
  if (theta == 0.0) return bessel_I_scaled(0, x);
  if (is_quarter_pi(theta)) return 0.5 * (bessel_I_scaled(0, x) - std::cos(phi) * bessel_I_scaled(1, x));
  throw std::invalid_argument("ff_density_closed: closed form exists only for theta = 0 or pi/4");
}

double ff_density_quadrature(double theta, double phi, double kt, double abs_tol, double rel_tol) {
  if (!(kt >= 0.0)) throw std::domain_error("ff_density_quadrature: kt must be >= 0");
  if (!(theta >= 0.0 && theta < std::numbers::pi / 2)) {
    throw std::domain_error("ff_density_quadrature: theta must lie in [0, pi/2)");
  }
  // Centre the integration variable on the slow mode k* = pi - phi, where the
  // decay rate 4 kt sin^2(eps/2) vanishes.
  const double kstar = std::numbers::pi - phi;
  auto integrand = [&](double eps) {
    const double s = std::sin(0.5 * eps);
    return rho0_at(theta, kstar + eps) * std::exp(-4.0 * kt * s * s);
  };
  using Quad = boost::math::quadrature::gauss_kronrod<double, 15>;
  double total = 0.0;
  // Halves so the peak sits on an interval endpoint; the prescribed absolute
  // tolerance is converted to the relative one Boost expects.
  for (auto [a, b] : {std::pair{-std::numbers::pi, 0.0}, std::pair{0.0, std::numbers::pi}}) {
    double err = 0.0;
    const double rough = Quad::integrate(integrand, a, b, 0, 1e-3);
    const double tol = std::max(rel_tol, abs_tol / std::max(std::abs(rough), 1e-300));
    total += Quad::integrate(integrand, a, b, 30, tol, &err);
  }
  return total / (2.0 * std::numbers::pi);
}

FreeFermionAsymptotics ff_asymptotic(double theta, double phi, double kt) {
  if (!(kt >= 10.0)) throw std::domain_error("ff_asymptotic: requires kt >= 10");
  if (!(theta >= 0.0 && theta < std::numbers::pi / 2)) throw std::domain_error("ff_asymptotic: bad theta");
  FreeFermionAsymptotics out;
  out.chi = (phi == 0.0 && theta > 0.0) ? 1.5 : 0.5;
  const double root = std::sqrt(std::numbers::pi * kt);
  if (theta == 0.0) {
    out.density = (1.0 + 1.0 / (16.0 * kt)) / (2.0 * root);
    out.two_term = true;
  } else if (is_quarter_pi(theta)) {
    const double c = std::cos(phi);
    out.density = (1.0 - c + (1.0 + 3.0 * c) / (16.0 * kt)) / (4.0 * root);
    out.two_term = true;
  } else {
    const double kstar = std::numbers::pi - phi;
    if (out.chi == 0.5) {
      out.density = rho0_at(theta, kstar) / (2.0 * root);
    } else {
      // second derivative of rho0 at k* by a centred difference of the closed form
      const double h = 1e-4;
      const double d2 = (rho0_at(theta, kstar + h) - 2.0 * rho0_at(theta, kstar) + rho0_at(theta, kstar - h)) / (h * h);
      out.density = d2 / (8.0 * std::sqrt(std::numbers::pi) * std::pow(kt, 1.5));
    }
  }
  return out;
}

double initial_corr(double theta, long separation) {
  const double c2 = std::cos(theta) * std::cos(theta);
  if (separation == 0) return c2;
  const double s2 = std::sin(theta) * std::sin(theta);
  const long power = std::labs(separation) - 1;
  return c2 * s2 * std::pow(s2 - c2, static_cast<double>(power));
}

}  // namespace nrchain
