#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include <Eigen/Dense>

#include "nrchain/chain.hpp"
#include "propagator.hpp"

namespace nrchain {

std::uint64_t trajectory_stream(std::uint64_t seed, std::size_t index) {
  const auto idx = static_cast<std::uint64_t>(index);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// ---------------------------------------------------------------------------
// Accumulators

void CheckpointAccumulator::reset(int L, double t) {
  *this = CheckpointAccumulator{};
  time = t;
  mom_even = mom_odd = Eigen::MatrixXcd::Zero(L, L);
  mom_even_re2 = mom_even_im2 = mom_odd_re2 = mom_odd_im2 = Eigen::MatrixXd::Zero(L, L);
  tilde = tilde2 = site_n = site_n2 = Eigen::VectorXd::Zero(L);
}

void CheckpointAccumulator::add(const CheckpointAccumulator& o) {
  count += o.count;
  n += o.n;
  n2 += o.n2;
  current += o.current;
  current2 += o.current2;
  energy += o.energy;
  energy2 += o.energy2;
  mom_even += o.mom_even;
  mom_odd += o.mom_odd;
  mom_even_re2 += o.mom_even_re2;
  mom_even_im2 += o.mom_even_im2;
  mom_odd_re2 += o.mom_odd_re2;
  mom_odd_im2 += o.mom_odd_im2;
  tilde += o.tilde;
  tilde2 += o.tilde2;
  site_n += o.site_n;
  site_n2 += o.site_n2;
  states.insert(states.end(), o.states.begin(), o.states.end());
}

namespace {

MeanWithError stats_of(double sum, double sum2, std::size_t count) {
  MeanWithError r;
  if (count == 0) return r;
  const double c = static_cast<double>(count);
  r.mean = sum / c;
  if (count > 1) {
    const double var = std::max(0.0, (sum2 - c * r.mean * r.mean) / (c - 1.0));
    r.stderr_mean = std::sqrt(var / c);
  }
  return r;
}

void record(CheckpointAccumulator& acc, const Eigen::VectorXcd& psi, const ChainOperators& ops, bool keep) {
  const int L = ops.L;
  const double nv = chain_density(psi, ops), cv = chain_current(psi, ops), ev = chain_energy(psi, ops);
  acc.count += 1;
  acc.n += nv;
  acc.n2 += nv * nv;
  acc.current += cv;
  acc.current2 += cv * cv;
  acc.energy += ev;
  acc.energy2 += ev * ev;
  const MomentumMatrices m = momentum_matrices(parity_correlators(psi, L), L);
  acc.mom_even += m.even;
  acc.mom_odd += m.odd;
  acc.mom_even_re2 += m.even.real().cwiseAbs2();
  acc.mom_even_im2 += m.even.imag().cwiseAbs2();
  acc.mom_odd_re2 += m.odd.real().cwiseAbs2();
  acc.mom_odd_im2 += m.odd.imag().cwiseAbs2();
  for (int i = 0; i < L; ++i) {
    const double t = m.even(i, i).real() + m.odd(i, i).real();
    acc.tilde[i] += t;
    acc.tilde2[i] += t * t;
  }
  const auto sites = site_densities(psi, L);
  for (int j = 0; j < L; ++j) {
    acc.site_n[j] += sites[static_cast<std::size_t>(j)];
    acc.site_n2[j] += sites[static_cast<std::size_t>(j)] * sites[static_cast<std::size_t>(j)];
  }
  if (keep) acc.states.push_back(psi);
}

}  // namespace

MeanWithError TrajectoryEnsemble::density(std::size_t i) const {
  const auto& a = checkpoints.at(i);
  return stats_of(a.n, a.n2, a.count);
}

MeanWithError TrajectoryEnsemble::current(std::size_t i) const {
  const auto& a = checkpoints.at(i);
  return stats_of(a.current, a.current2, a.count);
}

MeanWithError TrajectoryEnsemble::energy(std::size_t i) const {
  const auto& a = checkpoints.at(i);
  return stats_of(a.energy, a.energy2, a.count);
}

SectorOccupations TrajectoryEnsemble::occupations(std::size_t i) const {
  const auto& a = checkpoints.at(i);
  const double c = static_cast<double>(a.count);
  ParityCorrelators dummy{Eigen::MatrixXcd::Zero(L, L), Eigen::MatrixXcd::Zero(L, L)};
  SectorOccupations occ = momentum_occupations(dummy, L);
  for (int k = 0; k < L; ++k) {
    const auto ap = stats_of(a.mom_even(k, k).real(), a.mom_even_re2(k, k), a.count);
    const auto p = stats_of(a.mom_odd(k, k).real(), a.mom_odd_re2(k, k), a.count);
    const auto tl = stats_of(a.tilde[k], a.tilde2[k], a.count);
    occ.rho_ap[k] = ap.mean;
    occ.rho_p[k] = p.mean;
    occ.rho_tilde[k] = a.tilde[k] / c;
    occ.se_ap.push_back(ap.stderr_mean);
    occ.se_p.push_back(p.stderr_mean);
    occ.se_tilde.push_back(tl.stderr_mean);
  }
  return occ;
}

std::vector<MeanWithError> TrajectoryEnsemble::site_densities(std::size_t i) const {
  const auto& a = checkpoints.at(i);
  std::vector<MeanWithError> out;
  for (int j = 0; j < L; ++j) out.push_back(stats_of(a.site_n[j], a.site_n2[j], a.count));
  return out;
}

namespace {

// Standard errors below this are treated as exact zeros (deterministic ensembles).
constexpr double kStderrFloor = 1e-12;

template <class F>
void for_offdiagonal(const CheckpointAccumulator& a, int L, F&& f) {
  const Eigen::MatrixXcd* sums[2] = {&a.mom_even, &a.mom_odd};
  const Eigen::MatrixXd* re2[2] = {&a.mom_even_re2, &a.mom_odd_re2};
  const Eigen::MatrixXd* im2[2] = {&a.mom_even_im2, &a.mom_odd_im2};
  for (int s = 0; s < 2; ++s) {
    for (int k = 0; k < L; ++k) {
      for (int q = 0; q < L; ++q) {
        if (k == q) continue;
        const auto re = stats_of((*sums[s])(k, q).real(), (*re2[s])(k, q), a.count);
        const auto im = stats_of((*sums[s])(k, q).imag(), (*im2[s])(k, q), a.count);
        f(std::hypot(re.mean, im.mean), std::hypot(re.stderr_mean, im.stderr_mean));
      }
    }
  }
}

}  // namespace

double TrajectoryEnsemble::max_offdiagonal_z(std::size_t i) const {
  double worst = 0.0;
  for_offdiagonal(checkpoints.at(i), L, [&](double mag, double se) {
    worst = std::max(worst, mag / std::max(se, kStderrFloor));
  });
  return worst;
}

double TrajectoryEnsemble::max_offdiagonal(std::size_t i) const {
  double worst = 0.0;
  for_offdiagonal(checkpoints.at(i), L, [&](double mag, double) { worst = std::max(worst, mag); });
  return worst;
}

// ---------------------------------------------------------------------------
// Single trajectory

namespace {

constexpr double kNormRiseLimit = 1e-6;

double uniform_open_closed(std::mt19937_64& rng) {
  // (0, 1]
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

struct TrajectoryContext {
  const SpinChainConfig& cfg;
  const ChainOperators& ops;
  const detail::SymmetryBlocks& blocks;
};

std::string at_time(const char* what, double t) {
  std::ostringstream os;
  os << what << " at t = " << t;
  return os.str();
}

// Root of norm2(tau) = threshold in [lo, hi], where norm2(lo) > threshold >= norm2(hi).
// Newton steps are kept inside the bracket, otherwise the bracket is bisected.
double jump_delay(const detail::BlockPropagator& prop, double lo, double hi, double threshold, double tol) {
  double x = hi;
  for (int iter = 0; iter < 200; ++iter) {
    double slope = 0.0;
    const double f = prop.norm2(x, &slope) - threshold;
    if (std::abs(f) <= tol) return x;
    (f > 0.0 ? lo : hi) = x;
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) return hi;
    const double newton = slope < 0.0 ? x - f / slope : hi;
    x = (newton > lo && newton < hi) ? newton : 0.5 * (lo + hi);
  }
  return hi;
}

template <class OnCheckpoint>
std::vector<JumpRecord> simulate(const TrajectoryContext& ctx, std::size_t index, OnCheckpoint&& on_checkpoint) {
  const auto& cfg = ctx.cfg;
  std::mt19937_64 rng(trajectory_stream(cfg.seed, index));
  std::vector<JumpRecord> jumps;

  Eigen::VectorXcd psi = product_state(cfg.L, cfg.params.theta);
  psi /= psi.norm();
  double threshold = uniform_open_closed(rng);
  detail::BlockPropagator prop(ctx.blocks);
  prop.set(psi);
  double t_ref = 0.0;      // time at which prop was last set
  double t_safe = 0.0;     // latest time known to lie before the next jump
  double norm_safe = 1.0;  // squared norm there

  std::size_t next = 0;
  while (next < cfg.checkpoints.size()) {
    const double target = cfg.checkpoints[next];
    const double n_target = prop.norm2(target - t_ref);
    if (!std::isfinite(n_target)) throw TrajectoryError(at_time("trajectory: non-finite norm", target));
    if (n_target > norm_safe * (1.0 + kNormRiseLimit)) {
      throw TrajectoryError(at_time("trajectory: norm increased during no-jump evolution", target));
    }
    if (n_target > threshold) {
      psi = prop.state(target - t_ref);
      on_checkpoint(next++, Eigen::VectorXcd(psi / std::sqrt(n_target)));
      t_safe = target;
      norm_safe = n_target;
      continue;
    }

    const double delay = jump_delay(prop, t_safe - t_ref, target - t_ref, threshold, cfg.norm_tol);
    psi = prop.state(delay);
    const double t = t_ref + delay;

    std::vector<double> weights(ctx.ops.jumps.size());
    std::vector<Eigen::VectorXcd> lowered(ctx.ops.jumps.size());
    double total = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      lowered[j] = ctx.ops.jumps[j] * psi;
      weights[j] = lowered[j].squaredNorm();
      total += weights[j];
    }
    if (!(total > 0.0)) throw TrajectoryError(at_time("trajectory: norm decayed in a dark state", t));
    const double u = uniform_open_closed(rng) * total;
    std::size_t site = 0;
    double acc = weights[0];
    while (acc < u && site + 1 < weights.size()) acc += weights[++site];
    psi = lowered[site] / std::sqrt(weights[site]);
    jumps.push_back({t, static_cast<int>(site) + 1});

    threshold = uniform_open_closed(rng);
    prop.set(psi);
    t_ref = t_safe = t;
    norm_safe = 1.0;
  }
  return jumps;
}


unsigned worker_count(const SpinChainConfig& cfg) {
  unsigned n = cfg.threads;
  if (n == 0) {
    if (const char* env = std::getenv("SIM_THREADS")) {
      try {
        n = static_cast<unsigned>(std::stoul(env));
      } catch (const std::exception&) {
        throw std::invalid_argument(std::string("SIM_THREADS: not a positive integer: ") + env);
      }
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

constexpr std::size_t kBlockSize = 32;

}  // namespace

SingleTrajectory run_single_trajectory(const SpinChainConfig& cfg, const ChainOperators& ops, std::size_t index) {
  cfg.validate();
  const detail::SymmetryBlocks blocks(ops.effective_hamiltonian(cfg.params.kappa), cfg.L, cfg.cond_limit);
  SingleTrajectory out;
  out.jumps = simulate(TrajectoryContext{cfg, ops, blocks}, index,
                       [&](std::size_t, const Eigen::VectorXcd& psi) { out.states.push_back(psi); });
  return out;
}

TrajectoryEnsemble run_trajectories(const SpinChainConfig& cfg) {
  cfg.validate();
  const ChainOperators ops = build_operators(cfg);
  const detail::SymmetryBlocks sym(ops.effective_hamiltonian(cfg.params.kappa), cfg.L, cfg.cond_limit);
  const TrajectoryContext ctx{cfg, ops, sym};

  TrajectoryEnsemble ens;
  ens.L = cfg.L;
  ens.config = cfg;
  ens.jump_logs.resize(cfg.n_traj);
  ens.stream_ids.resize(cfg.n_traj);

  const std::size_t n_blocks = (cfg.n_traj + kBlockSize - 1) / kBlockSize;
  std::vector<std::vector<CheckpointAccumulator>> blocks(n_blocks);
  std::atomic<std::size_t> next_block{0};
  std::mutex error_mutex;
  std::string first_error;
  std::size_t first_error_block = std::numeric_limits<std::size_t>::max();

  auto worker = [&]() {
    for (;;) {
      const std::size_t b = next_block.fetch_add(1);
      if (b >= n_blocks) return;
      auto& acc = blocks[b];
      acc.resize(cfg.checkpoints.size());
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c].reset(cfg.L, cfg.checkpoints[c]);
      try {
        const std::size_t end = std::min(cfg.n_traj, (b + 1) * kBlockSize);
        for (std::size_t i = b * kBlockSize; i < end; ++i) {
          ens.stream_ids[i] = trajectory_stream(cfg.seed, i);
          ens.jump_logs[i] = simulate(ctx, i, [&](std::size_t c, const Eigen::VectorXcd& psi) {
            record(acc[c], psi, ops, cfg.keep_states);
          });
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (b < first_error_block) {
          first_error_block = b;
          first_error = e.what();
        }
      }
    }
  };

  const unsigned n_workers = std::min<std::size_t>(worker_count(cfg), n_blocks);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error_block != std::numeric_limits<std::size_t>::max()) throw TrajectoryError(first_error);

  ens.checkpoints.resize(cfg.checkpoints.size());
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    ens.checkpoints[c].reset(cfg.L, cfg.checkpoints[c]);
    for (const auto& blk : blocks) ens.checkpoints[c].add(blk[c]);
  }
  return ens;
}

}  // namespace nrchain
