#pragma once

// Rapidity-distribution dynamics: the t-GGE rate equation for the
// non-reciprocal XX spin chain and the diagonal loss law of free fermions.

#include <cstddef>
#include <memory>
#include <vector>

#include "nrchain/ode.hpp"
#include "nrchain/spectral.hpp"

namespace nrchain {

/// Physical constants of the chain.
struct ModelParams {
  double J = 1.0;      // exchange coupling
  double kappa = 1.0;  // loss rate, > 0
  double phi = 0.0;    // non-reciprocity angle in (-pi, pi]
  double theta = 0.0;  // initial-state angle in [0, pi/2)

  /// Throws std::domain_error naming the violated constraint.
  void validate() const;
};

/// Occupation rho(k_m) at physical time `time`.
struct RapidityState {
  PeriodicFunction rho;
  double time = 0.0;

  RapidityState(PeriodicFunction r, double t) : rho(std::move(r)), time(t) {}
  const FourierGrid& grid() const noexcept { return rho.grid; }
};

/// Tolerance for rho leaving [0, 1] before a state is treated as invalid.
inline constexpr double kRapidityTolerance = 1e-8;

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-13;
  double dt_init = 1e-4;
  std::vector<double> checkpoints;  // physical times, strictly increasing, first >= 0
  std::size_t max_steps = 50'000'000;

  void validate() const;
};

enum class Flow { TGGE, FreeFermion };

/// Initial rapidity distribution of the tilted product state; constant 1 at theta = 0.
RapidityState initial_rapidity(double theta, const FourierGrid& grid);

/// Evaluates the t-GGE right-hand side with a reusable FFT work area.
class TggeRhs {
 public:
  TggeRhs(const FourierGrid& grid, const ModelParams& params);

  void operator()(const Eigen::VectorXd& rho, Eigen::VectorXd& drho);

 private:
  ModelParams params_;
  SpectralTransform transform_;
  Eigen::VectorXd cos_shift_, sin_shift_;
  Eigen::VectorXd rho_c_, rho_s_, h_rho_, hd_rho_, h_rho_c_, h_rho_s_;
};

PeriodicFunction tgge_rhs(const RapidityState& state, const ModelParams& params);
PeriodicFunction free_fermion_rhs(const RapidityState& state, const ModelParams& params);

/// Closed-form free-fermion state rho0(k) exp(-2 kappa (1 + cos(phi + k)) t).
RapidityState free_fermion_exact(double theta, double phi, double kappa, double t, const FourierGrid& grid);

struct EvolveResult {
  std::vector<RapidityState> states;
  /// Most negative sample seen at any checkpoint before clamping (0 if none).
  double worst_undershoot = 0.0;
  /// Largest excess over 1 seen at any checkpoint.
  double worst_overshoot = 0.0;
  OdeStats stats;
};

/// Integrates from `initial` through every checkpoint. Checkpoint states are
/// clamped to rho >= 0; the integration itself never clamps.
EvolveResult evolve(const RapidityState& initial, Flow flow, const ModelParams& params,
                    const IntegratorConfig& cfg);

}  // namespace nrchain
