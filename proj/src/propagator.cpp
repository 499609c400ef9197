#include "propagator.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

namespace nrchain::detail {

namespace {

using Index = std::uint32_t;

// Translation by one site: site j -> j + 1, site L -> 1.
Index shift(Index s, int L) {
  const Index mask = (Index{1} << L) - 1;
  return ((s << 1) | (s >> (L - 1))) & mask;
}

struct Orbit {
  Index rep;
  int period;
};

}  // namespace

SymmetryBlocks::SymmetryBlocks(const SparseMatrix& K, int L, double cond_limit) {
  const Index dim = Index{1} << L;
  if (K.rows() != static_cast<Eigen::Index>(dim) || K.cols() != static_cast<Eigen::Index>(dim)) {
    throw std::invalid_argument("SymmetryBlocks: operator dimension does not match 2^L");
  }
  std::vector<std::vector<Orbit>> orbits(static_cast<std::size_t>(L + 1));
  for (Index s = 0; s < dim; ++s) {
    Index r = s;
    int period = 0;
    bool minimal = true;
    do {
      r = shift(r, L);
      ++period;
      if (r < s) minimal = false;
    } while (r != s);
    if (minimal) orbits[static_cast<std::size_t>(std::popcount(s))].push_back({s, period});
  }

  std::vector<Eigen::Triplet<Complex>> trip;
  Eigen::Index col = 0;
  for (int N = 0; N <= L; ++N) {
    for (int m = 0; m < L; ++m) {
      Block blk;
      blk.offset = col;
      for (const auto& o : orbits[static_cast<std::size_t>(N)]) {
        if ((m * o.period) % L != 0) continue;
        const double p = 2.0 * std::numbers::pi * m / L;
        const double amp = 1.0 / std::sqrt(static_cast<double>(o.period));
        Index r = o.rep;
        for (int a = 0; a < o.period; ++a) {
          trip.emplace_back(r, col, std::polar(amp, -p * a));
          r = shift(r, L);
        }
        ++col;
      }
      blk.dim = col - blk.offset;
      if (blk.dim > 0) blocks_.push_back(std::move(blk));
    }
  }
  U_.resize(dim, dim);
  U_.setFromTriplets(trip.begin(), trip.end());
  U_.makeCompressed();
  Ut_ = U_.adjoint();
  Ut_.makeCompressed();

  const SparseMatrix Kb = Ut_ * K * U_;
  std::vector<std::size_t> owner(dim);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (Eigen::Index i = 0; i < blocks_[b].dim; ++i) owner[static_cast<std::size_t>(blocks_[b].offset + i)] = b;
  }
  for (auto& blk : blocks_) blk.K = Eigen::MatrixXcd::Zero(blk.dim, blk.dim);
  double scale = 1.0;
  for (Eigen::Index i = 0; i < Kb.nonZeros(); ++i) scale = std::max(scale, std::abs(Kb.valuePtr()[i]));
  for (Eigen::Index r = 0; r < Kb.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(Kb, r); it; ++it) {
      const auto b = owner[static_cast<std::size_t>(it.row())];
      if (b != owner[static_cast<std::size_t>(it.col())]) {
        if (std::abs(it.value()) > 1e-12 * scale) {
          throw std::logic_error("SymmetryBlocks: operator is not block diagonal in (N, momentum)");
        }
        continue;
      }
      auto& blk = blocks_[b];
      blk.K(it.row() - blk.offset, it.col() - blk.offset) += it.value();
    }
  }

  for (auto& blk : blocks_) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(blk.K);
    bool ok = es.info() == Eigen::Success;
    if (ok) {
      blk.V = es.eigenvectors();
      blk.lambda = es.eigenvalues();
      Eigen::PartialPivLU<Eigen::MatrixXcd> lu(blk.V);
      blk.W = lu.inverse();
      const double cond = blk.V.norm() * blk.W.norm() / static_cast<double>(blk.dim);
      const double recon = (blk.V * blk.lambda.asDiagonal() * blk.W - blk.K).norm();
      ok = std::isfinite(cond) && cond <= cond_limit && recon <= 1e-12 * std::max(1.0, blk.K.norm());
    }
    blk.diagonal = ok;
    if (!ok) {
      blk.V.resize(0, 0);
      blk.W.resize(0, 0);
      blk.lambda.resize(0);
    }
  }
}

std::size_t SymmetryBlocks::fallback_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.diagonal ? 0 : 1;
  return n;
}

void BlockPropagator::set(const Eigen::VectorXcd& psi) {
  const Eigen::VectorXcd c = blocks_.to_blocks() * psi;
  active_.clear();
  const auto& bl = blocks_.blocks();
  for (std::size_t b = 0; b < bl.size(); ++b) {
    auto seg = c.segment(bl[b].offset, bl[b].dim);
    if (seg.squaredNorm() == 0.0) {
      coef_[b].resize(0);
      continue;
    }
    coef_[b] = bl[b].diagonal ? Eigen::VectorXcd(bl[b].W * seg) : Eigen::VectorXcd(seg);
    active_.push_back(b);
  }
}

Eigen::VectorXcd BlockPropagator::block_state(std::size_t b, double tau, Eigen::VectorXcd* deriv) const {
  const auto& blk = blocks_.blocks()[b];
  if (blk.diagonal) {
    const Eigen::VectorXcd phase = (Complex(0.0, -tau) * blk.lambda).array().exp();
    const Eigen::VectorXcd x = phase.cwiseProduct(coef_[b]);
    if (deriv) *deriv = blk.V * (Complex(0.0, -1.0) * blk.lambda.cwiseProduct(x));
    return blk.V * x;
  }
  Eigen::VectorXcd y = (Complex(0.0, -tau) * blk.K).exp() * coef_[b];
  if (deriv) *deriv = Complex(0.0, -1.0) * (blk.K * y);
  return y;
}

double BlockPropagator::norm2(double tau, double* derivative) const {
  double n2 = 0.0, d = 0.0;
  Eigen::VectorXcd dy;
  for (const auto b : active_) {
    const Eigen::VectorXcd y = block_state(b, tau, derivative ? &dy : nullptr);
    n2 += y.squaredNorm();
    if (derivative) d += 2.0 * y.dot(dy).real();
  }
  if (derivative) *derivative = d;
  return n2;
}

Eigen::VectorXcd BlockPropagator::state(double tau) const {
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(blocks_.to_spin().cols());
  for (const auto b : active_) {
    const auto& blk = blocks_.blocks()[b];
    c.segment(blk.offset, blk.dim) = block_state(b, tau, nullptr);
  }
  return blocks_.to_spin() * c;
}

}  // namespace nrchain::detail
