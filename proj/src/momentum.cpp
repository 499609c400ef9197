#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nrchain/chain.hpp"

namespace nrchain {

namespace {

using Index = std::uint32_t;

// Bits of the sites strictly between a and b (1-based, a != b).
Index between_mask(int a, int b) {
  const int lo = std::min(a, b), hi = std::max(a, b);
  return ((Index{1} << (hi - 1)) - 1) & ~((Index{1} << lo) - 1);
}

void check_dim(Eigen::Index dim, int L, const char* who) {
  if (L < kMinChainLength || L > kMaxChainLength || dim != (Eigen::Index{1} << L)) {
    throw std::invalid_argument(std::string(who) + ": state dimension does not match 2^L");
  }
}

// Visits every nonzero matrix element of c_j^dagger c_l in the spin basis:
// visit(j, l, s_out, s_in, sign), with sector parity taken from popcount(s_in).
template <class Visit>
void for_each_hop(int L, Eigen::Index dim, Visit&& visit) {
  for (Index s = 0; s < static_cast<Index>(dim); ++s) {
    for (int l = 1; l <= L; ++l) {
      const Index bit_l = Index{1} << (l - 1);
      if (!(s & bit_l)) continue;
      const Index s1 = s ^ bit_l;
      for (int j = 1; j <= L; ++j) {
        const Index bit_j = Index{1} << (j - 1);
        if (s1 & bit_j) continue;
        const double sign = (j == l || std::popcount(s1 & between_mask(j, l)) % 2 == 0) ? 1.0 : -1.0;
        visit(j, l, s1 | bit_j, s, sign);
      }
    }
  }
}

Eigen::MatrixXcd fourier(int L, double shift) {
  // U(n, j) = exp(i k_n j) / sqrt(L), k_n = 2 pi (n + 1 - shift) / L
  Eigen::MatrixXcd U(L, L);
  const double norm = 1.0 / std::sqrt(static_cast<double>(L));
  for (int n = 0; n < L; ++n) {
    const double k = 2.0 * std::numbers::pi * (n + 1 - shift) / L;
    for (int j = 1; j <= L; ++j) U(n, j - 1) = std::polar(norm, k * j);
  }
  return U;
}

}  // namespace

ParityCorrelators parity_correlators(const Eigen::VectorXcd& psi, int L) {
  check_dim(psi.size(), L, "parity_correlators");
  ParityCorrelators g{Eigen::MatrixXcd::Zero(L, L), Eigen::MatrixXcd::Zero(L, L)};
  const double inv = 1.0 / psi.squaredNorm();
  for_each_hop(L, psi.size(), [&](int j, int l, Index out, Index in, double sign) {
    const Complex v = std::conj(psi[out]) * psi[in] * (sign * inv);
    (std::popcount(in) % 2 == 0 ? g.even : g.odd)(j - 1, l - 1) += v;
  });
  return g;
}

ParityCorrelators parity_correlators(const Eigen::MatrixXcd& rho, int L) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("parity_correlators: density matrix must be square");
  check_dim(rho.rows(), L, "parity_correlators");
  ParityCorrelators g{Eigen::MatrixXcd::Zero(L, L), Eigen::MatrixXcd::Zero(L, L)};
  const double inv = 1.0 / rho.trace().real();
  for_each_hop(L, rho.rows(), [&](int j, int l, Index out, Index in, double sign) {
    const Complex v = rho(in, out) * (sign * inv);
    (std::popcount(in) % 2 == 0 ? g.even : g.odd)(j - 1, l - 1) += v;
  });
  return g;
}

MomentumMatrices momentum_matrices(const ParityCorrelators& g, int L) {
  if (g.even.rows() != L || g.even.cols() != L || g.odd.rows() != L || g.odd.cols() != L) {
    throw std::invalid_argument("momentum_matrices: correlators must be L x L");
  }
  const Eigen::MatrixXcd Uap = fourier(L, 0.5);
  const Eigen::MatrixXcd Up = fourier(L, 0.0);
  return {Uap * g.even * Uap.adjoint(), Up * g.odd * Up.adjoint()};
}

SectorOccupations momentum_occupations(const ParityCorrelators& g, int L) {
  const MomentumMatrices m = momentum_matrices(g, L);
  SectorOccupations occ;
  occ.L = L;
  for (int n = 1; n <= L; ++n) {
    const double base = 2.0 * std::numbers::pi / L;
    occ.k_ap.push_back(base * (n - 0.5));
    occ.k_p.push_back(base * n);
    occ.k_tilde.push_back(base * (n - 0.25));
    occ.rho_ap.push_back(m.even(n - 1, n - 1).real());
    occ.rho_p.push_back(m.odd(n - 1, n - 1).real());
    occ.rho_tilde.push_back(occ.rho_ap.back() + occ.rho_p.back());
  }
  return occ;
}

SectorOccupations momentum_occupations(const Eigen::VectorXcd& psi, int L) {
  return momentum_occupations(parity_correlators(psi, L), L);
}

SectorOccupations momentum_occupations(const Eigen::MatrixXcd& rho, int L) {
  return momentum_occupations(parity_correlators(rho, L), L);
}

}  // namespace nrchain
