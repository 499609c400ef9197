#include "nrchain/tgge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace nrchain {

void ModelParams::validate() const {
  std::ostringstream os;
  if (!(kappa > 0.0) || !std::isfinite(kappa)) os << "kappa must be > 0 (got " << kappa << ")";
  else if (!(phi > -std::numbers::pi && phi <= std::numbers::pi)) os << "phi must lie in (-pi, pi] (got " << phi << ")";
  else if (!(theta >= 0.0 && theta < std::numbers::pi / 2)) os << "theta must lie in [0, pi/2) (got " << theta << ")";
  else if (!std::isfinite(J)) os << "J must be finite";
  const auto msg = os.str();
  if (!msg.empty()) throw std::domain_error("ModelParams: " + msg);
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw std::invalid_argument("IntegratorConfig: tolerances must be > 0");
  if (!(dt_init > 0.0)) throw std::invalid_argument("IntegratorConfig: dt_init must be > 0");
  if (!checkpoints.empty() && checkpoints.front() < 0.0) {
    throw std::invalid_argument("IntegratorConfig: first checkpoint must be >= 0");
  }
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (!(checkpoints[i] > checkpoints[i - 1])) {
      throw std::invalid_argument("IntegratorConfig: checkpoints must be strictly increasing");
    }
  }
}

RapidityState initial_rapidity(double theta, const FourierGrid& grid) {
  if (!(theta >= 0.0 && theta < std::numbers::pi / 2)) {
    throw std::domain_error("initial_rapidity: theta must lie in [0, pi/2)");
  }
  if (theta == 0.0) {
    return RapidityState(PeriodicFunction(grid, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size()))), 0.0);
  }
  const double c2t = std::cos(2.0 * theta);
  const double c4 = std::pow(std::cos(theta), 4);
  auto rho = PeriodicFunction::sample(grid, [&](double k) {
    const double ck = std::cos(k);
    return 2.0 * c4 * (1.0 + ck) / (1.0 + 2.0 * ck * c2t + c2t * c2t);
  });
  return RapidityState(std::move(rho), 0.0);
}

TggeRhs::TggeRhs(const FourierGrid& grid, const ModelParams& params) : params_(params), transform_(grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  cos_shift_.resize(n);
  sin_shift_.resize(n);
  for (Eigen::Index m = 0; m < n; ++m) {
    const double a = grid.node(static_cast<std::size_t>(m)) + params.phi;
    cos_shift_[m] = std::cos(a);
    sin_shift_[m] = std::sin(a);
  }
}

void TggeRhs::operator()(const Eigen::VectorXd& rho, Eigen::VectorXd& drho) {
  rho_c_ = rho.cwiseProduct(cos_shift_);
  rho_s_ = rho.cwiseProduct(sin_shift_);
  const double n = rho.mean();
  const double mean_c = rho_c_.mean();
  const double mean_s = rho_s_.mean();

  transform_.hilbert_pair(rho, h_rho_, hd_rho_);
  h_rho_c_ = transform_.hilbert(rho_c_);
  h_rho_s_ = transform_.hilbert(rho_s_);

  const auto r = rho.array();
  const auto h = h_rho_.array();
  const auto hd = hd_rho_.array();
  drho = (-2.0 * params_.kappa *
          ((r + rho_c_.array()) * (1.0 - r) +
           n * (n + 2.0 * hd + h_rho_s_.array() + mean_c) +
           h * (h + h_rho_c_.array() - mean_s) +
           2.0 * mean_c * hd))
             .matrix();
}

PeriodicFunction tgge_rhs(const RapidityState& state, const ModelParams& params) {
  state.rho.check_finite();
  TggeRhs rhs(state.grid(), params);
  PeriodicFunction out(state.grid());
  rhs(state.rho.values, out.values);
  return out;
}

namespace {

Eigen::VectorXd free_fermion_rates(const FourierGrid& grid, const ModelParams& params) {
  Eigen::VectorXd rate(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t m = 0; m < grid.size(); ++m) {
    rate[static_cast<Eigen::Index>(m)] = 2.0 * params.kappa * (1.0 + std::cos(params.phi + grid.node(m)));
  }
  return rate;
}

}  // namespace

PeriodicFunction free_fermion_rhs(const RapidityState& state, const ModelParams& params) {
  state.rho.check_finite();
  const Eigen::VectorXd rate = free_fermion_rates(state.grid(), params);
  return PeriodicFunction(state.grid(), (-rate.array() * state.rho.values.array()).matrix());
}

RapidityState free_fermion_exact(double theta, double phi, double kappa, double t, const FourierGrid& grid) {
  if (!(t >= 0.0)) throw std::domain_error("free_fermion_exact: t must be >= 0");
  RapidityState s = initial_rapidity(theta, grid);
  ModelParams p;
  p.kappa = kappa;
  p.phi = phi;
  const Eigen::VectorXd rate = free_fermion_rates(grid, p);
  s.rho.values.array() *= (-rate.array() * t).exp();
  s.time = t;
  return s;
}

EvolveResult evolve(const RapidityState& initial, Flow flow, const ModelParams& params,
                    const IntegratorConfig& cfg) {
  params.validate();
  cfg.validate();
  initial.rho.check_finite();
  EvolveResult result;
  if (cfg.checkpoints.empty()) return result;
  if (initial.time > cfg.checkpoints.front()) {
    throw std::invalid_argument("evolve: initial time is later than the first checkpoint");
  }

  const FourierGrid grid = initial.grid();
  OdeOptions opt;
  opt.rel_tol = cfg.rel_tol;
  opt.abs_tol = cfg.abs_tol;
  opt.dt_init = cfg.dt_init;
  opt.max_steps = cfg.max_steps;

  auto record = [&](std::size_t, double t, const Eigen::VectorXd& y) {
    const double lo = y.minCoeff();
    const double hi = y.maxCoeff();
    result.worst_undershoot = std::min(result.worst_undershoot, lo);
    result.worst_overshoot = std::max(result.worst_overshoot, hi - 1.0);
    RapidityState s(PeriodicFunction(grid, y.cwiseMax(0.0)), t);
    result.states.push_back(std::move(s));
  };
  auto no_post = [](Eigen::VectorXd&) { return false; };

  Eigen::VectorXd y = initial.rho.values;
  if (flow == Flow::TGGE) {
    TggeRhs rhs(grid, params);
    result.stats = integrate_dopri5(
        [&](double, const Eigen::VectorXd& r, Eigen::VectorXd& dr) { rhs(r, dr); }, y, initial.time,
        std::span<const double>(cfg.checkpoints), opt, record, no_post);
  } else {
    const Eigen::VectorXd rate = free_fermion_rates(grid, params);
    result.stats = integrate_dopri5(
        [&](double, const Eigen::VectorXd& r, Eigen::VectorXd& dr) { dr = (-rate.array() * r.array()).matrix(); },
        y, initial.time, std::span<const double>(cfg.checkpoints), opt, record, no_post);
  }
  return result;
}

}  // namespace nrchain
