#pragma once

// Embedded Dormand-Prince 5(4) integrator with proportional-integral step
// control. Works on any Eigen dense object (real or complex). Checkpoints are
// reached by shortening the step that would overshoot them, never by
// interpolation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nrchain {

struct OdeOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  double dt_init = 1e-3;
  std::size_t max_steps = 10'000'000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  double last_dt = 0.0;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, double time) : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

namespace detail {

template <class State>
double scaled_error(const State& err, const State& y0, const State& y1, double atol, double rtol) {
  const auto scale = (atol + rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array()).eval();
  return (err.cwiseAbs().array() / scale).maxCoeff();
}

template <class State>
bool all_finite(const State& y) {
  return y.allFinite();
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y) from t0 through every checkpoint in order.
/// rhs: void(double t, const State& y, State& dydt).
/// on_checkpoint: void(std::size_t index, double t, const State& y).
/// post_step: bool(State& y) applied after each accepted step; returns true if it modified y.
template <class State, class Rhs, class Observer, class PostStep>
OdeStats integrate_dopri5(Rhs&& rhs, State& y, double t0, std::span<const double> checkpoints,
                          const OdeOptions& opt, Observer&& on_checkpoint, PostStep&& post_step) {
  OdeStats stats;
  if (checkpoints.empty()) return stats;
  if (!(opt.rel_tol > 0.0) || !(opt.abs_tol > 0.0) || !(opt.dt_init > 0.0)) {
    throw std::invalid_argument("integrate_dopri5: tolerances and dt_init must be positive");
  }
  if (checkpoints.front() < t0) {
    throw std::invalid_argument("integrate_dopri5: first checkpoint precedes the initial time");
  }
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (!(checkpoints[i] > checkpoints[i - 1])) {
      throw std::invalid_argument("integrate_dopri5: checkpoints must be strictly increasing");
    }
  }

  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double safety = 0.9, fac_min = 0.2, fac_max = 10.0;
  constexpr double alpha = 0.7 / 5.0, beta = 0.4 / 5.0;

  State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, ytmp = y, ynew = y, err = y;
  double t = t0;
  double h = opt.dt_init;
  double err_prev = 1e-4;
  bool reject_last = false;

  rhs(t, y, k1);
  ++stats.rhs_evals;

  std::size_t next = 0;
  while (next < checkpoints.size() && checkpoints[next] == t) {
    on_checkpoint(next, t, y);
    ++next;
  }

  std::size_t steps = 0;
  while (next < checkpoints.size()) {
    if (steps++ >= opt.max_steps) {
      std::ostringstream os;
      os << "step budget of " << opt.max_steps << " exhausted at t = " << t;
      throw IntegrationError(os.str(), t);
    }
    const double target = checkpoints[next];
    bool lands = false;
    double step = h;
    if (t + step >= target || target - (t + step) < 1e-12 * std::abs(target)) {
      step = target - t;
      lands = true;
    }

    ytmp = y + step * a21 * k1;
    rhs(t + c2 * step, ytmp, k2);
    ytmp = y + step * (a31 * k1 + a32 * k2);
    rhs(t + c3 * step, ytmp, k3);
    ytmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * step, ytmp, k4);
    ytmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * step, ytmp, k5);
    ytmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + step, ytmp, k6);
    ynew = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(t + step, ynew, k7);
    stats.rhs_evals += 6;

    err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double e = detail::scaled_error(err, y, ynew, opt.abs_tol, opt.rel_tol);
    if (!std::isfinite(e) || !detail::all_finite(ynew)) {
      std::ostringstream os;
      os << "non-finite state encountered at t = " << t + step;
      throw IntegrationError(os.str(), t + step);
    }

    if (e <= 1.0) {
      const double fac = std::clamp(safety * std::pow(std::max(e, 1e-10), -alpha) * std::pow(err_prev, beta),
                                    fac_min, reject_last ? 1.0 : fac_max);
      err_prev = std::max(e, 1e-4);
      t = lands ? target : t + step;
      y = ynew;
      // FSAL: reuse k7 unless post_step changed the state.
      if (post_step(y)) {
        rhs(t, y, k1);
        ++stats.rhs_evals;
      } else {
        k1 = k7;
      }
      ++stats.accepted;
      stats.last_dt = step;
      reject_last = false;
      // Keep the controller's natural step even when the last one was shortened.
      h = std::max(h, step) * fac;
      if (lands) {
        on_checkpoint(next, t, y);
        ++next;
      }
    } else {
      h = step * std::max(fac_min, safety * std::pow(e, -alpha));
      ++stats.rejected;
      reject_last = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "step size underflow at t = " << t;
      throw IntegrationError(os.str(), t);
    }
  }
  return stats;
}

}  // namespace nrchain
