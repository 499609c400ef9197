#include "nrchain/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

namespace nrchain {

void ObservableSeries::push_back(double kt, double density, double cur, double en) {
  times.push_back(kt);
  n.push_back(density);
  current.push_back(cur);
  energy.push_back(en);
}

void ObservableSeries::validate() const {
  const std::size_t len = times.size();
  if (n.size() != len || current.size() != len || energy.size() != len) {
    throw std::invalid_argument("ObservableSeries: columns have different lengths");
  }
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw std::invalid_argument("ObservableSeries: times must be strictly increasing");
    }
    if (!(n[i] >= 0.0 && n[i] <= 1.0 + kRapidityTolerance)) {
      throw std::invalid_argument("ObservableSeries: density outside [0, 1] at row " + std::to_string(i));
    }
  }
}

namespace {

double weighted_mean(const RapidityState& state, double (*weight)(double)) {
  const auto& g = state.grid();
  double sum = 0.0;
  for (std::size_t m = 0; m < g.size(); ++m) sum += weight(g.node(m)) * state.rho.values[static_cast<Eigen::Index>(m)];
  return sum / static_cast<double>(g.size());
}

double sin_weight(double k) { return std::sin(k); }
double cos_weight(double k) { return std::cos(k); }

}  // namespace

double density(const RapidityState& state) { return mean(state.rho); }

double current(const RapidityState& state, double J) { return J * weighted_mean(state, sin_weight); }

double energy_density(const RapidityState& state, double J) { return -J * weighted_mean(state, cos_weight); }

ObservableSeries make_series(const std::vector<RapidityState>& states, const ModelParams& params,
                             std::string provenance) {
  ObservableSeries s;
  s.provenance = std::move(provenance);
  for (const auto& st : states) {
    s.push_back(params.kappa * st.time, density(st), current(st, params.J), energy_density(st, params.J));
  }
  return s;
}

namespace {

// Derivatives at x[at] of the quadratic through three points.
struct Quadratic3 {
  double d1, d2;
};

Quadratic3 lagrange3(const double x[3], const double y[3], int at) {
  const double x0 = x[0], x1 = x[1], x2 = x[2];
  const double xa = x[at];
  const double l0 = (x0 - x1) * (x0 - x2);
  const double l1 = (x1 - x0) * (x1 - x2);
  const double l2 = (x2 - x0) * (x2 - x1);
  Quadratic3 q;
  q.d1 = y[0] * ((xa - x1) + (xa - x2)) / l0 + y[1] * ((xa - x0) + (xa - x2)) / l1 +
         y[2] * ((xa - x0) + (xa - x1)) / l2;
  q.d2 = 2.0 * (y[0] / l0 + y[1] / l1 + y[2] / l2);
  return q;
}

}  // namespace

LogDerivatives log_derivatives(const ObservableSeries& series) {
  const std::size_t len = series.size();
  if (len < 5) throw std::invalid_argument("log_derivatives: need at least 5 points");
  std::vector<double> x(len), y(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (!(series.times[i] > 0.0)) throw std::domain_error("log_derivatives: kt must be > 0");
    if (!(series.n[i] > 0.0)) {
      std::ostringstream os;
      os << "log_derivatives: non-positive density " << series.n[i] << " at kt = " << series.times[i];
      throw std::domain_error(os.str());
    }
    x[i] = std::log(series.times[i]);
    y[i] = std::log(series.n[i]);
  }
  LogDerivatives out;
  out.d1.resize(len);
  out.d2.resize(len);
  out.one_sided.assign(len, false);
  for (std::size_t i = 0; i < len; ++i) {
    std::size_t base;
    int at;
    if (i == 0) {
      base = 0;
      at = 0;
      out.one_sided[i] = true;
    } else if (i == len - 1) {
      base = len - 3;
      at = 2;
      out.one_sided[i] = true;
    } else {
      base = i - 1;
      at = 1;
    }
    const auto q = lagrange3(&x[base], &y[base], at);
    out.d1[i] = -q.d1;
    out.d2[i] = q.d2;
  }
  return out;
}

PowerLawFit fit_power_law(const ObservableSeries& series, double lo, double hi) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("fit_power_law: window must satisfy 0 < lo < hi");
  if (series.size() == 0 || lo < series.times.front() * (1 - 1e-12) || hi > series.times.back() * (1 + 1e-12)) {
    throw std::invalid_argument("fit_power_law: window lies outside the series range");
  }
  std::vector<double> x, y;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = series.times[i];
    if (t < lo || t > hi) continue;
    if (!(series.n[i] > 0.0)) throw std::domain_error("fit_power_law: non-positive density inside the window");
    x.push_back(std::log(t));
    y.push_back(std::log(series.n[i]));
  }
  if (x.size() < 10) {
    throw std::invalid_argument("fit_power_law: only " + std::to_string(x.size()) +
                                " points inside the window (need >= 10)");
  }
  const double count = static_cast<double>(x.size());
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= count;
  ym /= count;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
  }
  const double slope = sxy / sxx;
  const double intercept = ym - slope * xm;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (intercept + slope * x[i]);
    ssr += r * r;
  }
  PowerLawFit fit;
  fit.chi = -slope;
  fit.stderr_chi = std::sqrt(ssr / (count - 2.0) / sxx);
  fit.amplitude = std::exp(intercept);
  fit.window_lo = lo;
  fit.window_hi = hi;
  fit.points = x.size();
  return fit;
}

GaussianPeakFit fit_gaussian_peak(const RapidityState& state, double k_center_hint) {
  const auto& g = state.grid();
  const auto& rho = state.rho.values;
  const auto M = static_cast<long>(g.size());

  long best = -1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (long m = 0; m < M; ++m) {
    if (std::abs(wrap_angle(g.node(static_cast<std::size_t>(m)) - k_center_hint)) > std::numbers::pi / 4) continue;
    if (rho[m] > best_val) {
      best_val = rho[m];
      best = m;
    }
  }
  std::vector<double> sorted(rho.data(), rho.data() + M);
  std::nth_element(sorted.begin(), sorted.begin() + M / 2, sorted.end());
  const double median = sorted[static_cast<std::size_t>(M / 2)];
  if (best < 0 || !(best_val > 0.0) || !(best_val > 10.0 * median)) {
    std::ostringstream os;
    os << "fit_gaussian_peak: no clear peak near k = " << k_center_hint << " (max " << best_val << ", median "
       << median << ")";
    throw FitRejected(os.str());
  }
  // The maximum must be unique within the search window.
  for (long m = 0; m < M; ++m) {
    if (m == best) continue;
    if (std::abs(wrap_angle(g.node(static_cast<std::size_t>(m)) - k_center_hint)) > std::numbers::pi / 4) continue;
    if (rho[m] == best_val) throw FitRejected("fit_gaussian_peak: maximum is not unique");
  }

  // Contiguous support above the threshold, walking outwards from the maximum.
  const double threshold = 1e-3 * best_val;
  auto at = [&](long m) { return rho[((m % M) + M) % M]; };
  long left = best, right = best;
  while (right - left + 1 < M && at(left - 1) >= threshold) --left;
  while (right - left + 1 < M && at(right + 1) >= threshold) ++right;
  const long count = right - left + 1;
  if (count < 3) throw FitRejected("fit_gaussian_peak: peak is narrower than three grid nodes");

  const double k0 = g.node(static_cast<std::size_t>(best));
  const double scale = std::max(static_cast<double>(count) * g.spacing() / 2.0, g.spacing());
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  std::vector<double> us, ys, ws;
  for (long m = left; m <= right; ++m) {
    const double value = at(m);
    const double u = static_cast<double>(m - best) * g.spacing() / scale;
    const double y = std::log(value);
    const double w = value * value;
    const Eigen::Vector3d basis(1.0, u, u * u);
    normal += w * basis * basis.transpose();
    rhs += w * y * basis;
    us.push_back(u);
    ys.push_back(y);
    ws.push_back(w);
  }
  const Eigen::Vector3d coef = normal.ldlt().solve(rhs);
  const double a = coef[0];
  const double b = coef[1] / scale;
  const double c = coef[2] / (scale * scale);
  if (!(c < 0.0) || !std::isfinite(c)) throw FitRejected("fit_gaussian_peak: log-profile is not concave");

  GaussianPeakFit fit;
  fit.sigma = std::sqrt(-1.0 / (2.0 * c));
  const double shift = -b / (2.0 * c);
  fit.center = std::fmod(k0 + shift + 2.0 * std::numbers::pi, 2.0 * std::numbers::pi);
  fit.amplitude = std::exp(a - b * b / (4.0 * c));
  double wsum = 0.0, rsum = 0.0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const double r = ys[i] - (coef[0] + coef[1] * us[i] + coef[2] * us[i] * us[i]);
    rsum += ws[i] * r * r;
    wsum += ws[i];
  }
  fit.residual = std::sqrt(rsum / wsum);
  fit.points = static_cast<std::size_t>(count);
  if (!std::isfinite(fit.residual)) throw FitRejected("fit_gaussian_peak: non-finite residual");
  return fit;
}

RatioSeries ratio_series(const ObservableSeries& series, double J) {
  constexpr double guard = 1e-14;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto safe = [&](double num, double den) { return std::abs(den) < guard ? nan : num / den; };
  RatioSeries r;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double jn = J * series.n[i];
    r.current_over_n.push_back(safe(series.current[i], jn));
    r.energy_over_n.push_back(safe(series.energy[i], jn));
    r.current_over_energy.push_back(safe(series.current[i], series.energy[i]));
  }
  return r;
}

}  // namespace nrchain
