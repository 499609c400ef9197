#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "doctest.h"
#include "nrchain/analytic.hpp"
#include "nrchain/chain.hpp"
#include "propagator.hpp"

using namespace nrchain;
using std::numbers::pi;

namespace {

SpinChainConfig chain_config(int L, double kappa, double phi, double theta, std::size_t n_traj,
                             std::vector<double> kt) {
  SpinChainConfig cfg;
  cfg.L = L;
  cfg.params.kappa = kappa;
  cfg.params.phi = phi;
  cfg.params.theta = theta;
  cfg.n_traj = n_traj;
  for (double x : kt) cfg.checkpoints.push_back(x / kappa);
  return cfg;
}

Eigen::MatrixXcd dense(const SparseMatrix& m) { return Eigen::MatrixXcd(m); }

// Column-stacked Liouvillian: vec(A X B) = (B^T kron A) vec(X).
Eigen::MatrixXcd liouvillian(const ChainOperators& ops, double kappa) {
  const Eigen::MatrixXcd K = dense(ops.effective_hamiltonian(kappa));
  const auto dim = K.rows();
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(dim, dim);
  const Complex i(0.0, 1.0);
  Eigen::MatrixXcd gen = -i * Eigen::kroneckerProduct(I, K).eval() + i * Eigen::kroneckerProduct(K.conjugate(), I).eval();
  for (const auto& Lj : ops.jumps) {
    const Eigen::MatrixXcd A = dense(Lj);
    gen += kappa * Eigen::kroneckerProduct(A.conjugate(), A).eval();
  }
  return gen;
}

Eigen::MatrixXcd exact_rho(const SpinChainConfig& cfg, const ChainOperators& ops, double t) {
  const Eigen::VectorXcd psi = product_state(cfg.L, cfg.params.theta);
  const Eigen::MatrixXcd rho0 = psi * psi.adjoint();
  const auto dim = rho0.rows();
  const Eigen::VectorXcd v = (liouvillian(ops, cfg.params.kappa) * t).exp() * rho0.reshaped();
  return v.reshaped(dim, dim);
}

Eigen::VectorXcd random_state(int L, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXcd v(Eigen::Index{1} << L);
  for (auto& x : v) x = Complex(nd(rng), nd(rng));
  return v / v.norm();
}

}  // namespace

TEST_CASE("configuration checks") {
  SpinChainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.L = 3;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg.L = 15;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg.L = 6;
  cfg.n_traj = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.n_traj = 1;
  cfg.checkpoints = {1.0, 0.5};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  auto dense_cfg = chain_config(7, 1.0, 0.0, 0.0, 1, {1.0});
  CHECK_THROWS(dense_lindblad(dense_cfg));
}

TEST_CASE("operator algebra") {
  ModelParams p;
  p.phi = 0.7;
  for (int L : {4, 5}) {
    const auto ops = build_operators(L, p);
    const Eigen::MatrixXcd H = dense(ops.H), N = dense(ops.number);
    CHECK((H - H.adjoint()).norm() < 1e-14);
    CHECK((H * N - N * H).norm() < 1e-13);
    CHECK(ops.jumps.size() == static_cast<std::size_t>(L));
    for (const auto& Lj : ops.jumps) {
      const Eigen::MatrixXcd A = dense(Lj);
      CHECK((N * A - A * N + A).norm() < 1e-13);  // lowers N by one
    }
    const Eigen::MatrixXcd C = dense(ops.current);
    CHECK((C - C.adjoint()).norm() < 1e-14);
  }
}

TEST_CASE("jump operators on the filled state") {
  // Both lowered configurations are orthogonal, so the weight is 2 for any phi.
  for (double phi : {0.0, 0.4, -pi / 2, pi}) {
    ModelParams p;
    p.phi = phi;
    const auto ops = build_operators(4, p);
    Eigen::VectorXcd up = Eigen::VectorXcd::Zero(16);
    up[15] = 1.0;
    for (const auto& Lj : ops.jumps) CHECK((Lj * up).squaredNorm() == doctest::Approx(2.0));
  }
}

TEST_CASE("phi = pi annihilates the symmetric pair state") {
  ModelParams p;
  p.phi = pi;
  const int L = 5;
  const auto ops = build_operators(L, p);
  for (int j = 1; j <= L; ++j) {
    const int next = j % L + 1;
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1 << L);
    v[1 << (j - 1)] = 1 / std::sqrt(2.0);
    v[1 << (next - 1)] = 1 / std::sqrt(2.0);
    CHECK((ops.jumps[j - 1] * v).norm() < 1e-15);
  }
}

TEST_CASE("product state correlators") {
  const int L = 6;
  for (double th : {0.0, 0.35, pi / 4, 1.1}) {
    const auto psi = product_state(L, th);
    CHECK(psi.norm() == doctest::Approx(1.0));
    const auto g = parity_correlators(psi, L);
    const Eigen::MatrixXcd G = g.even + g.odd;
    for (int j = 0; j < L; ++j) {
      for (int l = 0; l < L; ++l) {
        CHECK(std::abs(G(j, l) - initial_corr(th, std::abs(j - l))) < 1e-14);
      }
    }
  }
}

TEST_CASE("sector occupations of simple states") {
  for (int L : {4, 6}) {
    Eigen::VectorXcd up = Eigen::VectorXcd::Zero(Eigen::Index{1} << L);
    up[up.size() - 1] = 1.0;
    const auto occ = momentum_occupations(up, L);
    double sum_ap = 0.0;
    for (int n = 0; n < L; ++n) {
      CHECK(std::abs(occ.rho_p[n]) < 1e-14);
      sum_ap += occ.rho_ap[n];
    }
    CHECK(sum_ap == doctest::Approx(L));
    CHECK(occ.k_ap[0] == doctest::Approx(pi / L));
    CHECK(occ.k_p[0] == doctest::Approx(2 * pi / L));
    CHECK(occ.k_tilde[0] == doctest::Approx(1.5 * pi / L));
  }
  {
    // Odd particle number lives in the periodic sector.
    const int L = 5;
    Eigen::VectorXcd up = Eigen::VectorXcd::Zero(32);
    up[31] = 1.0;
    const auto occ = momentum_occupations(up, L);
    double sum_p = 0.0;
    for (int n = 0; n < L; ++n) {
      CHECK(std::abs(occ.rho_ap[n]) < 1e-14);
      sum_p += occ.rho_p[n];
    }
    CHECK(sum_p == doctest::Approx(L));
  }
  Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(64);
  vac[0] = 1.0;
  const auto occ = momentum_occupations(vac, 6);
  for (double r : occ.rho_tilde) CHECK(r == 0.0);
}

TEST_CASE("sector sums reproduce density, current and energy") {
  std::mt19937_64 rng(8);
  ModelParams p;
  p.J = 1.3;
  for (int L : {4, 5, 7}) {
    const auto ops = build_operators(L, p);
    for (int trial = 0; trial < 3; ++trial) {
      const auto psi = random_state(L, rng);
      const auto occ = momentum_occupations(psi, L);
      double n = 0.0, cur = 0.0, en = 0.0;
      for (int m = 0; m < L; ++m) {
        CHECK(occ.rho_tilde[m] == doctest::Approx(occ.rho_ap[m] + occ.rho_p[m]));
        n += occ.rho_tilde[m];
        cur += std::sin(occ.k_ap[m]) * occ.rho_ap[m] + std::sin(occ.k_p[m]) * occ.rho_p[m];
        en -= std::cos(occ.k_ap[m]) * occ.rho_ap[m] + std::cos(occ.k_p[m]) * occ.rho_p[m];
      }
      CHECK(n / L == doctest::Approx(chain_density(psi, ops)).epsilon(1e-12));
      CHECK(p.J * cur / L == doctest::Approx(chain_current(psi, ops)).epsilon(1e-12));
      CHECK(p.J * en / L == doctest::Approx(chain_energy(psi, ops)).epsilon(1e-12));
    }
  }
}

TEST_CASE("block propagator agrees with the matrix exponential") {
  std::mt19937_64 rng(21);
  ModelParams p;
  p.phi = -pi / 2;
  for (int L : {4, 5, 6}) {
    const auto ops = build_operators(L, p);
    for (double kappa : {0.02, 1.0}) {
      const SparseMatrix K = ops.effective_hamiltonian(kappa);
      const Eigen::MatrixXcd Kd = dense(K);
      detail::SymmetryBlocks blocks(K, L, 1e6);
      detail::BlockPropagator prop(blocks);
      const auto psi = random_state(L, rng);
      prop.set(psi);
      for (double tau : {0.0, 0.3, 2.0, 11.0}) {
        const Eigen::VectorXcd ref = (Complex(0.0, -tau) * Kd).exp() * psi;
        CHECK((prop.state(tau) - ref).norm() < 1e-10);
        double slope = 0.0;
        CHECK(prop.norm2(tau, &slope) == doctest::Approx(ref.squaredNorm()).epsilon(1e-12));
        const double h = 1e-5;
        const double fd = (prop.norm2(tau + h) - prop.norm2(tau - h)) / (2 * h);
        if (tau > 0) CHECK(slope == doctest::Approx(fd).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("block propagator falls back to expm for ill-conditioned blocks") {
  // The loss operators keep K normal block by block, so use one-way hopping
  // plus a neighbour interaction: still translation invariant and number
  // conserving, but with non-orthogonal eigenvectors.
  const int L = 5;
  const Eigen::Index dim = 1 << L;
  std::vector<Eigen::Triplet<Complex>> t;
  for (int s = 0; s < dim; ++s) {
    for (int j = 0; j < L; ++j) {
      const int next = (j + 1) % L;
      const bool a = s >> j & 1, b = s >> next & 1;
      if (a && !b) t.emplace_back(s ^ (1 << j) ^ (1 << next), s, Complex(0.7, -0.2));
      if (a && b) t.emplace_back(s, s, Complex(0.4, -0.1));
    }
  }
  SparseMatrix K(dim, dim);
  K.setFromTriplets(t.begin(), t.end());
  detail::SymmetryBlocks strict(K, L, 1.0 + 1e-9);
  CHECK(strict.fallback_count() > 0);
  CHECK(strict.fallback_count() < strict.blocks().size());
  detail::BlockPropagator prop(strict);
  std::mt19937_64 rng(4);
  const auto psi = random_state(L, rng);
  prop.set(psi);
  const Eigen::MatrixXcd Kd = dense(K);
  for (double tau : {0.4, 1.7}) {
    const Eigen::VectorXcd ref = (Complex(0.0, -tau) * Kd).exp() * psi;
    CHECK((prop.state(tau) - ref).norm() < 1e-10);
    double slope = 0.0;
    prop.norm2(tau, &slope);
    const double h = 1e-5;
    CHECK(slope == doctest::Approx((prop.norm2(tau + h) - prop.norm2(tau - h)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("dense integrator against the Liouvillian exponential") {
  for (double th : {0.0, pi / 4}) {
    const auto cfg = chain_config(4, 0.5, -pi / 2, th, 1, {0.0, 0.25, 1.0, 3.0});
    const auto ops = build_operators(cfg);
    const auto res = dense_lindblad(cfg);
    REQUIRE(res.density_matrices.size() == 4);
    CHECK(res.series.times[2] == doctest::Approx(1.0));
    CHECK(res.max_trace_drift < 1e-9);
    for (std::size_t c = 0; c < cfg.checkpoints.size(); ++c) {
      const auto ref = exact_rho(cfg, ops, cfg.checkpoints[c]);
      CHECK((res.density_matrices[c] - ref).norm() < 1e-8);
      CHECK(res.series.n[c] == doctest::Approx(chain_density(ref, ops)).epsilon(1e-9));
    }
  }
}

TEST_CASE("dense integrator initial state and purity") {
  const auto cfg = chain_config(4, 0.3, 0.0, 0.0, 1, {0.0, 0.01, 0.05, 0.2});
  const auto res = dense_lindblad(cfg);
  CHECK(res.density_matrices[0].trace().real() == doctest::Approx(1.0));
  CHECK(res.series.n[0] == doctest::Approx(1.0));
  double prev = 1.0;
  for (const auto& rho : res.density_matrices) {
    const double purity = (rho * rho).trace().real();
    CHECK(purity <= prev + 1e-12);
    prev = purity;
  }
  CHECK(prev < 1.0 - 1e-3);
  const auto tilted = dense_lindblad(chain_config(5, 0.3, 0.0, 0.6, 1, {0.0}));
  CHECK(tilted.series.n[0] == doctest::Approx(std::pow(std::cos(0.6), 2)));
}

TEST_CASE("dense regression at weak loss") {
  // Frozen from the Liouvillian-exponential oracle above, which shares nothing
  // with the Runge-Kutta integrator; a run at 100x tighter tolerances agrees to 1e-15.
  constexpr double kDensityAtOne = 0.12163243438217441;
  const auto cfg = chain_config(4, 0.02, -pi / 2, 0.0, 1, {1.0});
  const auto ops = build_operators(cfg);
  CHECK(chain_density(exact_rho(cfg, ops, cfg.checkpoints[0]), ops) == doctest::Approx(kDensityAtOne).epsilon(1e-10));
  CHECK(dense_lindblad(cfg).series.n[0] == doctest::Approx(kDensityAtOne).epsilon(1e-9));
}

TEST_CASE("trajectories reproduce the dense solution") {
  for (double kappa : {0.2, 1.0}) {
    auto cfg = chain_config(4, kappa, -pi / 2, pi / 4, 1500, {0.25, 1.0, 2.5});
    const auto ens = run_trajectories(cfg);
    const auto ref = dense_lindblad(cfg);
    for (std::size_t c = 0; c < cfg.checkpoints.size(); ++c) {
      const auto n = ens.density(c);
      CHECK(std::abs(n.mean - ref.series.n[c]) <= 3 * n.stderr_mean);
      const auto cur = ens.current(c);
      CHECK(std::abs(cur.mean - ref.series.current[c]) <= 4 * cur.stderr_mean + 1e-12);
    }
  }
}

TEST_CASE("trajectory determinism") {
  auto cfg = chain_config(5, 0.5, -pi / 2, 0.3, 70, {0.5, 2.0});
  cfg.threads = 1;
  const auto a = run_trajectories(cfg);
  const auto b = run_trajectories(cfg);
  cfg.threads = 3;
  const auto c = run_trajectories(cfg);
  REQUIRE(a.jump_logs.size() == 70);
  for (std::size_t i = 0; i < a.jump_logs.size(); ++i) {
    REQUIRE(a.jump_logs[i].size() == b.jump_logs[i].size());
    REQUIRE(a.jump_logs[i].size() == c.jump_logs[i].size());
    for (std::size_t j = 0; j < a.jump_logs[i].size(); ++j) {
      CHECK(a.jump_logs[i][j].time == b.jump_logs[i][j].time);
      CHECK(a.jump_logs[i][j].site == c.jump_logs[i][j].site);
      CHECK(a.jump_logs[i][j].time == c.jump_logs[i][j].time);
    }
  }
  for (std::size_t k = 0; k < a.checkpoints.size(); ++k) {
    CHECK(a.checkpoints[k].n == c.checkpoints[k].n);
    CHECK(a.checkpoints[k].n2 == c.checkpoints[k].n2);
    CHECK(a.checkpoints[k].mom_even == c.checkpoints[k].mom_even);
    CHECK(a.checkpoints[k].tilde == c.checkpoints[k].tilde);
  }
  CHECK(trajectory_stream(1, 0) != trajectory_stream(1, 1));
  CHECK(trajectory_stream(1, 0) != trajectory_stream(2, 0));
  CHECK(a.stream_ids[3] == trajectory_stream(cfg.seed, 3));

  cfg.seed = 2;
  const auto d = run_trajectories(cfg);
  bool differs = false;
  for (std::size_t i = 0; i < d.jump_logs.size() && !differs; ++i) {
    differs = d.jump_logs[i].size() != a.jump_logs[i].size() ||
              (!d.jump_logs[i].empty() && d.jump_logs[i][0].time != a.jump_logs[i][0].time);
  }
  CHECK(differs);
}

TEST_CASE("single trajectory states") {
  auto cfg = chain_config(6, 1.0, 0.4, 0.2, 1, {0.1, 0.5, 1.5});
  const auto ops = build_operators(cfg);
  const auto one = run_single_trajectory(cfg, ops, 0);
  REQUIRE(one.states.size() == 3);
  for (const auto& s : one.states) CHECK(std::abs(s.norm() - 1.0) < 1e-10);
  for (std::size_t j = 1; j < one.jumps.size(); ++j) CHECK(one.jumps[j].time > one.jumps[j - 1].time);
  cfg.n_traj = 4;
  cfg.keep_states = true;
  const auto ens = run_trajectories(cfg);
  for (const auto& acc : ens.checkpoints) {
    CHECK(acc.states.size() == 4);
    CHECK(acc.count == 4);
    for (const auto& s : acc.states) CHECK(std::abs(s.norm() - 1.0) < 1e-10);
  }
  CHECK((ens.checkpoints[0].states[0] - one.states[0]).norm() == 0.0);
}

TEST_CASE("negligible loss gives unitary evolution") {
  SpinChainConfig cfg = chain_config(6, 1e-8, -pi / 2, pi / 4, 50, {});
  cfg.checkpoints = {0.5, 1.0};
  const auto ens = run_trajectories(cfg);
  for (const auto& log : ens.jump_logs) CHECK(log.empty());
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(ens.density(c).stderr_mean < 1e-8);  // cancellation in sum-of-squares only
    CHECK(ens.density(c).mean == doctest::Approx(0.5).epsilon(1e-6));
  }
}

TEST_CASE("long times empty the chain") {
  const auto ens = run_trajectories(chain_config(4, 1.0, 0.3, 0.0, 100, {80.0}));
  CHECK(ens.density(0).mean < 1e-6);
  for (const auto& log : ens.jump_logs) CHECK(log.size() == 4);
}

TEST_CASE("ensemble is translation invariant and particle numbers balance") {
  const auto ens = run_trajectories(chain_config(6, 0.5, -pi / 2, 0.0, 800, {0.5, 2.0}));
  for (std::size_t c = 0; c < 2; ++c) {
    const auto sites = ens.site_densities(c);
    const auto n = ens.density(c);
    for (const auto& s : sites) CHECK(std::abs(s.mean - n.mean) <= 4 * s.stderr_mean);
    const auto occ = ens.occupations(c);
    double sum = 0.0;
    for (double r : occ.rho_tilde) sum += r;
    CHECK(sum / 6 == doctest::Approx(n.mean).epsilon(1e-12));
    CHECK(occ.se_tilde.size() == 6);
    CHECK(ens.max_offdiagonal_z(c) < 4.0);
  }
}
