#pragma once

// Observables of a rapidity distribution and the fits applied to their time
// series: density, Hamiltonian current, energy density, logarithmic
// derivatives, power-law exponents and the late-time Gaussian peak.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrchain/tgge.hpp"

namespace nrchain {

/// Time-stamped observables. Times are the dimensionless kappa*t.
struct ObservableSeries {
  std::vector<double> times;
  std::vector<double> n;
  std::vector<double> current;
  std::vector<double> energy;
  std::string provenance;

  std::size_t size() const noexcept { return times.size(); }
  void push_back(double kt, double density, double cur, double en);
  /// Throws std::invalid_argument on ragged arrays, non-increasing times or n outside [0, 1 + 1e-8].
  void validate() const;
};

double density(const RapidityState& state);
double current(const RapidityState& state, double J);
double energy_density(const RapidityState& state, double J);

/// Series of (kappa*t, n, current, energy) over evolved states.
ObservableSeries make_series(const std::vector<RapidityState>& states, const ModelParams& params,
                             std::string provenance = {});

struct LogDerivatives {
  std::vector<double> d1;  // -d log n / d log(kappa t)
  std::vector<double> d2;  //  d^2 log n / d log(kappa t)^2
  std::vector<bool> one_sided;
};

/// Three-point stencils on the non-uniform (log kt, log n) samples; the two
/// endpoints use one-sided stencils and are flagged. Needs >= 5 points, kt > 0, n > 0.
LogDerivatives log_derivatives(const ObservableSeries& series);

struct PowerLawFit {
  double chi = 0.0;
  double stderr_chi = 0.0;
  double amplitude = 0.0;  // prefactor A in n = A (kt)^(-chi)
  double window_lo = 0.0;
  double window_hi = 0.0;
  std::size_t points = 0;
};

inline constexpr double kDefaultFitLo = 50.0;
inline constexpr double kDefaultFitHi = 1e4;

/// Least-squares slope of log n against log kt over samples with lo <= kt <= hi.
PowerLawFit fit_power_law(const ObservableSeries& series, double lo = kDefaultFitLo, double hi = kDefaultFitHi);

class FitRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussianPeakFit {
  double amplitude = 0.0;
  double sigma = 0.0;
  double center = 0.0;
  double residual = 0.0;  // weighted RMS of log-space residuals
  std::size_t points = 0;
};

/// Fits log rho to a quadratic around the maximum found within pi/4 of the
/// hint, using the contiguous nodes with rho >= 1e-3 * max.
GaussianPeakFit fit_gaussian_peak(const RapidityState& state, double k_center_hint);

struct RatioSeries {
  std::vector<double> current_over_n;       // J_current / (J n)
  std::vector<double> energy_over_n;        // eps / (J n)
  std::vector<double> current_over_energy;  // J_current / eps
};

/// Elementwise ratios; NaN wherever |denominator| < 1e-14.
RatioSeries ratio_series(const ObservableSeries& series, double J);

}  // namespace nrchain
