#pragma once

// Periodic momentum grid on [0, 2pi) and the Fourier-space operations used by
// the rapidity solver: sample-mean quadrature, circular Hilbert transform and
// the derivative of the Hilbert transform.

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace nrchain {

class FourierGrid {
 public:
  /// Throws std::invalid_argument unless size >= 8 and size is a power of two.
  explicit FourierGrid(std::size_t size);

  std::size_t size() const noexcept { return size_; }
  double spacing() const noexcept { return spacing_; }
  double node(std::size_t m) const noexcept { return spacing_ * static_cast<double>(m); }
  Eigen::VectorXd nodes() const;

  /// Signed Fourier mode carried by FFT slot m (0..M/2 positive, the rest negative).
  long mode(std::size_t m) const noexcept {
    return m <= size_ / 2 ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(size_);
  }

  friend bool operator==(const FourierGrid&, const FourierGrid&) = default;

 private:
  std::size_t size_;
  double spacing_;
};

/// Real samples f(k_m) on a FourierGrid.
struct PeriodicFunction {
  FourierGrid grid;
  Eigen::VectorXd values;

  explicit PeriodicFunction(FourierGrid g) : grid(g), values(Eigen::VectorXd::Zero(g.size())) {}
  PeriodicFunction(FourierGrid g, Eigen::VectorXd v);

  /// Samples f at every node.
  template <class F>
  static PeriodicFunction sample(const FourierGrid& g, F&& f) {
    PeriodicFunction out(g);
    for (std::size_t m = 0; m < g.size(); ++m) out.values[static_cast<Eigen::Index>(m)] = f(g.node(m));
    return out;
  }

  /// Throws std::domain_error if any sample is NaN or infinite.
  void check_finite() const;
};

/// FFT work area bound to one grid size. Not thread-safe; use one per worker.
/// Forward transforms are normalized by 1/M so coefficient 0 is the sample mean.
class SpectralTransform {
 public:
  explicit SpectralTransform(const FourierGrid& grid);
  ~SpectralTransform();
  SpectralTransform(const SpectralTransform&) = delete;
  SpectralTransform& operator=(const SpectralTransform&) = delete;
  SpectralTransform(SpectralTransform&&) noexcept;
  SpectralTransform& operator=(SpectralTransform&&) noexcept;

  const FourierGrid& grid() const noexcept;

  /// Half-spectrum coefficients f_n for n = 0..M/2.
  void forward(const Eigen::VectorXd& values, std::vector<std::complex<double>>& coeffs);
  /// Real samples from a half spectrum (Hermitian symmetry implied).
  void inverse(const std::vector<std::complex<double>>& coeffs, Eigen::VectorXd& values);

  Eigen::VectorXd hilbert(const Eigen::VectorXd& values);
  Eigen::VectorXd hilbert_deriv(const Eigen::VectorXd& values);
  /// Both transforms of the same input from one forward FFT.
  void hilbert_pair(const Eigen::VectorXd& values, Eigen::VectorXd& h, Eigen::VectorXd& h_deriv);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

double mean(const PeriodicFunction& f);
PeriodicFunction hilbert(const PeriodicFunction& f);
PeriodicFunction hilbert_deriv(const PeriodicFunction& f);

/// Trigonometric interpolant of f evaluated at an arbitrary momentum k.
/// The Nyquist coefficient is split evenly between +M/2 and -M/2.
double interpolate(const PeriodicFunction& f, double k);

/// Wraps x into (-pi, pi].
double wrap_angle(double x);

}  // namespace nrchain
