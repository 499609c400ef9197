#pragma once

// No-jump propagation exp(-i K tau) for a translation-invariant, number
// conserving K. The spin basis is rotated into (N, lattice momentum) blocks
// once; each block is diagonalized, or exponentiated directly when its
// eigenvectors are too ill-conditioned.

#include <vector>

#include <Eigen/Core>

#include "nrchain/chain.hpp"

namespace nrchain::detail {

class SymmetryBlocks {
 public:
  SymmetryBlocks(const SparseMatrix& K, int L, double cond_limit);

  struct Block {
    Eigen::Index offset = 0;
    Eigen::Index dim = 0;
    bool diagonal = true;  // false: expm fallback
    Eigen::VectorXcd lambda;
    Eigen::MatrixXcd V, W;  // K_b = V diag(lambda) W
    Eigen::MatrixXcd K;     // kept for the expm fallback
  };

  const std::vector<Block>& blocks() const { return blocks_; }
  const SparseMatrix& to_spin() const { return U_; }
  const SparseMatrix& to_blocks() const { return Ut_; }
  std::size_t fallback_count() const;

 private:
  SparseMatrix U_, Ut_;
  std::vector<Block> blocks_;
};

class BlockPropagator {
 public:
  explicit BlockPropagator(const SymmetryBlocks& blocks) : blocks_(blocks), coef_(blocks.blocks().size()) {}

  /// Start propagating from psi (spin basis).
  void set(const Eigen::VectorXcd& psi);
  /// ||exp(-i K tau) psi||^2 and, optionally, its tau-derivative.
  double norm2(double tau, double* derivative = nullptr) const;
  /// exp(-i K tau) psi in the spin basis.
  Eigen::VectorXcd state(double tau) const;

 private:
  Eigen::VectorXcd block_state(std::size_t b, double tau, Eigen::VectorXcd* deriv) const;

  const SymmetryBlocks& blocks_;
  std::vector<Eigen::VectorXcd> coef_;  // W c_b for diagonal blocks, c_b otherwise
  std::vector<std::size_t> active_;
};

}  // namespace nrchain::detail
