#include <cmath>
#include <sstream>

#include "nrchain/chain.hpp"
#include "nrchain/ode.hpp"

namespace nrchain {

namespace {

constexpr double kTraceDriftLimit = 1e-6;

}  // namespace

DenseLindbladResult dense_lindblad(const SpinChainConfig& cfg, double rel_tol, double abs_tol) {
  cfg.validate();
  if (cfg.L > kMaxDenseChainLength) {
    throw std::domain_error("dense_lindblad: L must be <= " + std::to_string(kMaxDenseChainLength) + " (got " +
                            std::to_string(cfg.L) + ")");
  }
  const ChainOperators ops = build_operators(cfg);
  const SparseMatrix K = ops.effective_hamiltonian(cfg.params.kappa);
  const double kappa = cfg.params.kappa;

  const Eigen::VectorXcd psi0 = product_state(cfg.L, cfg.params.theta);
  Eigen::MatrixXcd rho = psi0 * psi0.adjoint();

  // drho/dt = -i (K rho - rho K^dagger) + kappa sum_j L_j rho L_j^dagger
  auto rhs = [&](double, const Eigen::MatrixXcd& r, Eigen::MatrixXcd& out) {
    const Eigen::MatrixXcd Kr = K * r;
    out = Complex(0.0, -1.0) * (Kr - Kr.adjoint());
    for (const auto& Lj : ops.jumps) {
      const Eigen::MatrixXcd A = Lj * r;
      const Eigen::MatrixXcd B = Lj * A.adjoint();
      out += kappa * B.adjoint();
    }
  };

  DenseLindbladResult result;
  result.series.provenance = "dense-lindblad";
  auto observe = [&](std::size_t, double t, const Eigen::MatrixXcd& r) {
    result.series.push_back(kappa * t, chain_density(r, ops), chain_current(r, ops), chain_energy(r, ops));
    result.density_matrices.push_back(r);
  };
  double t_now = 0.0;
  auto post = [&](Eigen::MatrixXcd& r) {
    r = (0.5 * (r + r.adjoint())).eval();
    const double drift = std::abs(r.trace().real() - 1.0);
    result.max_trace_drift = std::max(result.max_trace_drift, drift);
    if (drift > kTraceDriftLimit) {
      std::ostringstream os;
      os << "dense_lindblad: trace drifted by " << drift << " (limit " << kTraceDriftLimit << ")";
      throw IntegrationError(os.str(), t_now);
    }
    return true;
  };

  OdeOptions opt;
  opt.rel_tol = rel_tol;
  opt.abs_tol = abs_tol;
  opt.dt_init = 1e-3 / std::max({cfg.params.J, kappa, 1e-12});
  result.stats = integrate_dopri5(
      rhs, rho, 0.0, std::span<const double>(cfg.checkpoints), opt,
      [&](std::size_t i, double t, const Eigen::MatrixXcd& r) {
        t_now = t;
        observe(i, t, r);
      },
      post);
  return result;
}

}  // namespace nrchain
