#include "nrchain/spectral.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fftw3.h>

namespace nrchain {

namespace {

// FFTW planning is not reentrant; execution with the planned arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace

FourierGrid::FourierGrid(std::size_t size) : size_(size), spacing_(0.0) {
  if (size < 8 || !is_power_of_two(size)) {
    throw std::invalid_argument("FourierGrid: size must be a power of two >= 8, got " +
                                std::to_string(size));
  }
  spacing_ = 2.0 * std::numbers::pi / static_cast<double>(size);
}

Eigen::VectorXd FourierGrid::nodes() const {
  Eigen::VectorXd k(static_cast<Eigen::Index>(size_));
  for (std::size_t m = 0; m < size_; ++m) k[static_cast<Eigen::Index>(m)] = node(m);
  return k;
}

PeriodicFunction::PeriodicFunction(FourierGrid g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
  if (static_cast<std::size_t>(values.size()) != grid.size()) {
    throw std::invalid_argument("PeriodicFunction: sample count " + std::to_string(values.size()) +
                                " does not match grid size " + std::to_string(grid.size()));
  }
}

void PeriodicFunction::check_finite() const {
  for (Eigen::Index m = 0; m < values.size(); ++m) {
    if (!std::isfinite(values[m])) {
      throw std::domain_error("PeriodicFunction: non-finite sample at node " + std::to_string(m));
    }
  }
}

struct SpectralTransform::Impl {
  FourierGrid grid;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::vector<std::complex<double>> scratch;

  explicit Impl(const FourierGrid& g) : grid(g) {
    const auto n = static_cast<int>(g.size());
    real = fftw_alloc_real(g.size());
    spec = fftw_alloc_complex(g.size() / 2 + 1);
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(n, real, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(n, spec, real, FFTW_ESTIMATE);
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(spec);
  }

  std::complex<double>* spectrum() { return reinterpret_cast<std::complex<double>*>(spec); }

  void load_forward(const Eigen::VectorXd& values) {
    const std::size_t M = grid.size();
    if (static_cast<std::size_t>(values.size()) != M) {
      throw std::invalid_argument("SpectralTransform: sample count does not match grid");
    }
    std::copy(values.data(), values.data() + M, real);
    fftw_execute(fwd);
    const double scale = 1.0 / static_cast<double>(M);
    auto* c = spectrum();
    for (std::size_t n = 0; n <= M / 2; ++n) c[n] *= scale;
  }

  void unload_inverse(Eigen::VectorXd& out) {
    fftw_execute(bwd);
    out.resize(static_cast<Eigen::Index>(grid.size()));
    std::copy(real, real + grid.size(), out.data());
  }
};

SpectralTransform::SpectralTransform(const FourierGrid& grid) : impl_(std::make_unique<Impl>(grid)) {}
SpectralTransform::~SpectralTransform() = default;
SpectralTransform::SpectralTransform(SpectralTransform&&) noexcept = default;
SpectralTransform& SpectralTransform::operator=(SpectralTransform&&) noexcept = default;

const FourierGrid& SpectralTransform::grid() const noexcept { return impl_->grid; }

void SpectralTransform::forward(const Eigen::VectorXd& values, std::vector<std::complex<double>>& coeffs) {
  impl_->load_forward(values);
  const std::size_t half = impl_->grid.size() / 2;
  coeffs.assign(impl_->spectrum(), impl_->spectrum() + half + 1);
}

void SpectralTransform::inverse(const std::vector<std::complex<double>>& coeffs, Eigen::VectorXd& values) {
  const std::size_t half = impl_->grid.size() / 2;
  if (coeffs.size() != half + 1) throw std::invalid_argument("SpectralTransform: bad spectrum length");
  std::copy(coeffs.begin(), coeffs.end(), impl_->spectrum());
  impl_->unload_inverse(values);
}

Eigen::VectorXd SpectralTransform::hilbert(const Eigen::VectorXd& values) {
  impl_->load_forward(values);
  const std::size_t half = impl_->grid.size() / 2;
  auto* c = impl_->spectrum();
  // -i sgn(n) on the non-negative half; sgn is zero at n = 0 and at Nyquist.
  c[0] = 0.0;
  for (std::size_t n = 1; n < half; ++n) c[n] = std::complex<double>(c[n].imag(), -c[n].real());
  c[half] = 0.0;
  Eigen::VectorXd out;
  impl_->unload_inverse(out);
  return out;
}

Eigen::VectorXd SpectralTransform::hilbert_deriv(const Eigen::VectorXd& values) {
  impl_->load_forward(values);
  const std::size_t half = impl_->grid.size() / 2;
  auto* c = impl_->spectrum();
  for (std::size_t n = 0; n <= half; ++n) c[n] *= static_cast<double>(n);
  Eigen::VectorXd out;
  impl_->unload_inverse(out);
  return out;
}

void SpectralTransform::hilbert_pair(const Eigen::VectorXd& values, Eigen::VectorXd& h, Eigen::VectorXd& h_deriv) {
  impl_->load_forward(values);
  const std::size_t half = impl_->grid.size() / 2;
  auto& saved = impl_->scratch;
  saved.assign(impl_->spectrum(), impl_->spectrum() + half + 1);

  auto* c = impl_->spectrum();
  c[0] = 0.0;
  for (std::size_t n = 1; n < half; ++n) c[n] = std::complex<double>(saved[n].imag(), -saved[n].real());
  c[half] = 0.0;
  impl_->unload_inverse(h);

  for (std::size_t n = 0; n <= half; ++n) c[n] = saved[n] * static_cast<double>(n);
  impl_->unload_inverse(h_deriv);
}

double mean(const PeriodicFunction& f) { return f.values.mean(); }

PeriodicFunction hilbert(const PeriodicFunction& f) {
  SpectralTransform st(f.grid);
  return PeriodicFunction(f.grid, st.hilbert(f.values));
}

PeriodicFunction hilbert_deriv(const PeriodicFunction& f) {
  SpectralTransform st(f.grid);
  return PeriodicFunction(f.grid, st.hilbert_deriv(f.values));
}

double interpolate(const PeriodicFunction& f, double k) {
  SpectralTransform st(f.grid);
  std::vector<std::complex<double>> c;
  st.forward(f.values, c);
  const std::size_t half = f.grid.size() / 2;
  double sum = c[0].real();
  for (std::size_t n = 1; n < half; ++n) {
    sum += 2.0 * (c[n] * std::polar(1.0, static_cast<double>(n) * k)).real();
  }
  sum += c[half].real() * std::cos(static_cast<double>(half) * k);
  return sum;
}

double wrap_angle(double x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(x, two_pi);
  if (y <= -std::numbers::pi) y += two_pi;
  if (y > std::numbers::pi) y -= two_pi;
  return y;
}

}  // namespace nrchain
