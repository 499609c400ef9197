#pragma once

// Exact finite-chain benchmarks for the periodic spin model: operator
// construction in the 2^L spin basis, quantum-jump trajectories, a dense
// master-equation integrator and parity-sector momentum occupations.
//
// Basis convention: bit (j-1) of a basis index is 1 when site j is up
// (n_j = 1), for sites j = 1..L.

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "nrchain/observables.hpp"
#include "nrchain/tgge.hpp"

namespace nrchain {

using Complex = std::complex<double>;
using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

inline constexpr int kMinChainLength = 4;
inline constexpr int kMaxChainLength = 14;
inline constexpr int kMaxDenseChainLength = 6;

struct SpinChainConfig {
  int L = 12;
  ModelParams params;
  std::size_t n_traj = 1000;
  std::uint64_t seed = 1;
  std::vector<double> checkpoints;  // physical times, strictly increasing
  double norm_tol = 1e-8;           // squared-norm tolerance of the jump-time search
  double cond_limit = 1e6;          // blocks with worse eigenvector conditioning use expm
  bool keep_states = false;
  unsigned threads = 0;  // 0: SIM_THREADS or hardware concurrency

  /// Throws std::domain_error / std::invalid_argument naming the failing field.
  void validate() const;
};

struct ChainOperators {
  int L = 0;
  SparseMatrix H;
  std::vector<SparseMatrix> jumps;  // L_j = S^-_j + e^{i phi} S^-_{j+1}, j = 1..L, site L+1 = 1
  SparseMatrix number;              // total N = sum_j n_j
  SparseMatrix current;             // sum_j (iJ/2)(S^+_{j+1} S^-_j - S^+_j S^-_{j+1}) = J sum_k sin(k) n(k)

  /// H - (i kappa / 2) sum_j L_j^dagger L_j
  SparseMatrix effective_hamiltonian(double kappa) const;
};

ChainOperators build_operators(const SpinChainConfig& cfg);
ChainOperators build_operators(int L, const ModelParams& params);

/// Product state with every spin cos(theta)|up> + sin(theta)|down>.
Eigen::VectorXcd product_state(int L, double theta);

/// Two-point fermionic correlators <P c_j^dagger c_l> resolved by particle-number parity.
struct ParityCorrelators {
  Eigen::MatrixXcd even;  // P_+ sector (antiperiodic momenta)
  Eigen::MatrixXcd odd;   // P_- sector (periodic momenta)
};

ParityCorrelators parity_correlators(const Eigen::VectorXcd& psi, int L);
ParityCorrelators parity_correlators(const Eigen::MatrixXcd& rho, int L);

struct SectorOccupations {
  int L = 0;
  std::vector<double> k_ap, rho_ap;        // (2 pi / L)(n - 1/2)
  std::vector<double> k_p, rho_p;          // (2 pi / L) n
  std::vector<double> k_tilde, rho_tilde;  // (2 pi / L)(n - 1/4), rho_ap + rho_p
  /// Standard errors of the above when built from a trajectory ensemble; empty otherwise.
  std::vector<double> se_ap, se_p, se_tilde;
};

/// Momentum-space matrices <P c^dagger(k) c(q)> for both sectors.
struct MomentumMatrices {
  Eigen::MatrixXcd even;  // k, q in Q_ap
  Eigen::MatrixXcd odd;   // k, q in Q_p
};

MomentumMatrices momentum_matrices(const ParityCorrelators& g, int L);
SectorOccupations momentum_occupations(const ParityCorrelators& g, int L);
SectorOccupations momentum_occupations(const Eigen::VectorXcd& psi, int L);
SectorOccupations momentum_occupations(const Eigen::MatrixXcd& rho, int L);

struct JumpRecord {
  double time;
  int site;  // 1..L
};

struct MeanWithError {
  double mean = 0.0;
  double stderr_mean = 0.0;
};

/// Sums over trajectories at one checkpoint; reduced in trajectory order.
struct CheckpointAccumulator {
  double time = 0.0;
  std::size_t count = 0;
  double n = 0.0, n2 = 0.0;
  double current = 0.0, current2 = 0.0;
  double energy = 0.0, energy2 = 0.0;
  Eigen::MatrixXcd mom_even, mom_odd;      // sums of momentum matrices
  Eigen::MatrixXd mom_even_re2, mom_even_im2, mom_odd_re2, mom_odd_im2;
  Eigen::VectorXd tilde, tilde2;           // rho_tilde sums
  Eigen::VectorXd site_n, site_n2;         // <n_j> sums, j = 1..L
  std::vector<Eigen::VectorXcd> states;    // only with keep_states

  void reset(int L, double t);
  void add(const CheckpointAccumulator& other);
};

struct TrajectoryEnsemble {
  int L = 0;
  SpinChainConfig config;
  std::vector<CheckpointAccumulator> checkpoints;
  std::vector<std::vector<JumpRecord>> jump_logs;  // per trajectory
  std::vector<std::uint64_t> stream_ids;           // per trajectory

  MeanWithError density(std::size_t checkpoint) const;
  MeanWithError current(std::size_t checkpoint) const;
  MeanWithError energy(std::size_t checkpoint) const;
  SectorOccupations occupations(std::size_t checkpoint) const;
  std::vector<MeanWithError> site_densities(std::size_t checkpoint) const;
  /// Largest |<c^dagger(k) c(q)>| / standard error over k != q within a sector.
  double max_offdiagonal_z(std::size_t checkpoint) const;
  /// Largest |<c^dagger(k) c(q)>| over k != q within a sector.
  double max_offdiagonal(std::size_t checkpoint) const;
};

class TrajectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Quantum-jump unraveling with norm-threshold waiting times. Deterministic in
/// (seed, n_traj, step control) regardless of the worker count.
TrajectoryEnsemble run_trajectories(const SpinChainConfig& cfg);

/// Single trajectory, exposed for tests; returns states at each checkpoint.
struct SingleTrajectory {
  std::vector<Eigen::VectorXcd> states;
  std::vector<JumpRecord> jumps;
};
SingleTrajectory run_single_trajectory(const SpinChainConfig& cfg, const ChainOperators& ops, std::size_t index);

/// Per-trajectory random stream id derived from (seed, index).
std::uint64_t trajectory_stream(std::uint64_t seed, std::size_t index);

struct DenseLindbladResult {
  ObservableSeries series;  // times in kappa*t
  std::vector<Eigen::MatrixXcd> density_matrices;
  double max_trace_drift = 0.0;
  OdeStats stats;
};

/// Direct Runge-Kutta integration of the master equation for L <= 6.
DenseLindbladResult dense_lindblad(const SpinChainConfig& cfg, double rel_tol = 1e-10, double abs_tol = 1e-12);

/// Expectation values per site for a pure state or density matrix.
double chain_density(const Eigen::VectorXcd& psi, const ChainOperators& ops);
double chain_current(const Eigen::VectorXcd& psi, const ChainOperators& ops);
double chain_energy(const Eigen::VectorXcd& psi, const ChainOperators& ops);
double chain_density(const Eigen::MatrixXcd& rho, const ChainOperators& ops);
double chain_current(const Eigen::MatrixXcd& rho, const ChainOperators& ops);
double chain_energy(const Eigen::MatrixXcd& rho, const ChainOperators& ops);

/// <n_j> for each site j = 1..L.
std::vector<double> site_densities(const Eigen::VectorXcd& psi, int L);

}  // namespace nrchain
