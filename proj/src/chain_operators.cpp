#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nrchain/chain.hpp"

namespace nrchain {

void SpinChainConfig::validate() const {
  if (L < kMinChainLength || L > kMaxChainLength) {
    std::ostringstream os;
    os << "SpinChainConfig: L must lie in [" << kMinChainLength << ", " << kMaxChainLength << "] (got " << L << ")";
    throw std::domain_error(os.str());
  }
  params.validate();
  if (n_traj < 1) throw std::invalid_argument("SpinChainConfig: n_traj must be >= 1");
  if (!(norm_tol > 0.0)) throw std::invalid_argument("SpinChainConfig: norm_tol must be > 0");
  if (!(cond_limit >= 1.0)) throw std::invalid_argument("SpinChainConfig: cond_limit must be >= 1");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 0.0 || (i > 0 && !(checkpoints[i] > checkpoints[i - 1]))) {
      throw std::invalid_argument("SpinChainConfig: checkpoints must be >= 0 and strictly increasing");
    }
  }
}

namespace {

using Triplet = Eigen::Triplet<Complex>;
using Index = std::uint32_t;

bool up(Index s, int site) { return (s >> (site - 1)) & 1u; }
Index flip(Index s, int site) { return s ^ (Index{1} << (site - 1)); }
int wrap_site(int j, int L) { return ((j - 1) % L + L) % L + 1; }

// coeff * S^+_a S^-_b (a != b)
void add_hop(std::vector<Triplet>& out, int L, int a, int b, Complex coeff) {
  const Index dim = Index{1} << L;
  for (Index s = 0; s < dim; ++s) {
    if (up(s, b) && !up(s, a)) out.emplace_back(flip(flip(s, b), a), s, coeff);
  }
}

SparseMatrix from_triplets(int L, const std::vector<Triplet>& t) {
  const auto dim = static_cast<Eigen::Index>(Index{1} << L);
  SparseMatrix m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace

ChainOperators build_operators(int L, const ModelParams& params) {
  if (L < kMinChainLength || L > kMaxChainLength) {
    throw std::domain_error("build_operators: L must lie in [4, 14] (got " + std::to_string(L) + ")");
  }
  const Index dim = Index{1} << L;
  ChainOperators ops;
  ops.L = L;

  std::vector<Triplet> h, cur, num;
  const Complex half_i_j(0.0, params.J / 2.0);
  for (int j = 1; j <= L; ++j) {
    const int next = wrap_site(j + 1, L);
    add_hop(h, L, next, j, -params.J / 2.0);
    add_hop(h, L, j, next, -params.J / 2.0);
    add_hop(cur, L, next, j, half_i_j);
    add_hop(cur, L, j, next, -half_i_j);
  }
  for (Index s = 0; s < dim; ++s) {
    num.emplace_back(s, s, static_cast<double>(std::popcount(s)));
  }
  ops.H = from_triplets(L, h);
  ops.current = from_triplets(L, cur);
  ops.number = from_triplets(L, num);

  const Complex phase = std::polar(1.0, params.phi);
  for (int j = 1; j <= L; ++j) {
    const int next = wrap_site(j + 1, L);
    std::vector<Triplet> t;
    for (Index s = 0; s < dim; ++s) {
      if (up(s, j)) t.emplace_back(flip(s, j), s, 1.0);
      if (up(s, next)) t.emplace_back(flip(s, next), s, phase);
    }
    ops.jumps.push_back(from_triplets(L, t));
  }
  return ops;
}

ChainOperators build_operators(const SpinChainConfig& cfg) {
  cfg.validate();
  return build_operators(cfg.L, cfg.params);
}

SparseMatrix ChainOperators::effective_hamiltonian(double kappa) const {
  SparseMatrix loss = H;
  loss.setZero();
  for (const auto& Lj : jumps) loss += SparseMatrix(Lj.adjoint() * Lj);
  SparseMatrix heff = H - Complex(0.0, kappa / 2.0) * loss;
  heff.prune(Complex(0.0, 0.0));
  heff.makeCompressed();
  return heff;
}

Eigen::VectorXcd product_state(int L, double theta) {
  const Index dim = Index{1} << L;
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::VectorXcd psi(static_cast<Eigen::Index>(dim));
  for (Index b = 0; b < dim; ++b) {
    const int n_up = std::popcount(b);
    psi[b] = std::pow(c, n_up) * std::pow(s, L - n_up);
  }
  return psi;
}

namespace {

double expect(const Eigen::VectorXcd& psi, const SparseMatrix& op) { return psi.dot(op * psi).real(); }

double expect(const Eigen::MatrixXcd& rho, const SparseMatrix& op) {
  Complex tr = 0.0;
  for (Eigen::Index r = 0; r < op.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(op, r); it; ++it) tr += it.value() * rho(it.col(), it.row());
  }
  return tr.real();
}

}  // namespace

double chain_density(const Eigen::VectorXcd& psi, const ChainOperators& ops) {
  return expect(psi, ops.number) / psi.squaredNorm() / ops.L;
}
double chain_current(const Eigen::VectorXcd& psi, const ChainOperators& ops) {
  return expect(psi, ops.current) / psi.squaredNorm() / ops.L;
}
double chain_energy(const Eigen::VectorXcd& psi, const ChainOperators& ops) {
  return expect(psi, ops.H) / psi.squaredNorm() / ops.L;
}
double chain_density(const Eigen::MatrixXcd& rho, const ChainOperators& ops) {
  return expect(rho, ops.number) / rho.trace().real() / ops.L;
}
double chain_current(const Eigen::MatrixXcd& rho, const ChainOperators& ops) {
  return expect(rho, ops.current) / rho.trace().real() / ops.L;
}
double chain_energy(const Eigen::MatrixXcd& rho, const ChainOperators& ops) {
  return expect(rho, ops.H) / rho.trace().real() / ops.L;
}

std::vector<double> site_densities(const Eigen::VectorXcd& psi, int L) {
  std::vector<double> n(static_cast<std::size_t>(L), 0.0);
  const double norm2 = psi.squaredNorm();
  for (Eigen::Index s = 0; s < psi.size(); ++s) {
    const double p = std::norm(psi[s]);
    if (p == 0.0) continue;
    for (int j = 1; j <= L; ++j) {
      if (up(static_cast<Index>(s), j)) n[static_cast<std::size_t>(j - 1)] += p;
    }
  }
  for (auto& v : n) v /= norm2;
  return n;
}

}  // namespace nrchain
