#ifndef SHELAB_KERNEL_HPP
#define SHELAB_KERNEL_HPP

// Heat kernel p_t(z) = (4 pi kappa t)^{-1/2} exp(-z^2 / (4 kappa t)) of the
// operator kappa d^2/dx^2, spectral Gaussian convolution on the truncated
// domain, and the L^2 / Laplace-domain identities built on top of it.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/fft.hpp"
#include "shelab/model.hpp"

namespace shelab {

inline constexpr double kPi = std::numbers::pi;

inline double heat_kernel(double t, double z, double kappa) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("heat_kernel: kappa must be > 0");
  const double s = 4.0 * kappa * t;
  return std::exp(-z * z / s) / std::sqrt(kPi * s);
}

/// int p_t(z)^2 dz = (8 pi kappa t)^{-1/2}.
inline double kernel_l2_norm_sq(double t, double kappa) {
  if (!(t > 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("kernel_l2_norm_sq: t and kappa must be > 0");
  return 1.0 / std::sqrt(8.0 * kPi * kappa * t);
}

/// int_0^inf exp(-lambda t) ||p_t||^2 dt = 1 / (2 sqrt(2 kappa lambda)).
inline double laplace_kernel_l2(double lambda, double kappa) {
  if (!(lambda > 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("laplace_kernel_l2: lambda and kappa must be > 0");
  return 1.0 / (2.0 * std::sqrt(2.0 * kappa * lambda));
}

/// coeff^4 / (8 kappa): the moment Lyapunov exponent bound for envelope `coeff`.
inline double lyapunov_threshold(double coeff, double kappa) {
  if (!(coeff > 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("lyapunov_threshold: coeff and kappa must be > 0");
  const double c2 = coeff * coeff;
  return c2 * c2 / (8.0 * kappa);
}

enum class TruncationGuard { enforce, off };

/// Fraction of p_t's mass lying farther than `distance` from its center.
inline double kernel_tail_mass(double t, double kappa, double distance) {
  if (distance <= 0.0) return 1.0;
  return std::erfc(distance / std::sqrt(4.0 * kappa * t));
}

inline constexpr double kWrapTolerance = 1e-8;

/// Samples of (p_t * f) on the grid of `f`, computed spectrally on the
/// periodic extension of the domain. With the guard enabled, the kernel mass
/// that can wrap around (beyond x_max minus the support radius of f) must be
/// below 1e-8.
inline Field heat_convolve(const Field& f, double t, double kappa,
                           TruncationGuard guard = TruncationGuard::enforce) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_convolve: t must be > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("heat_convolve: kappa must be > 0");
  if (!f.finite()) throw std::invalid_argument("heat_convolve: non-finite input");
  const std::size_t n = f.values.size();
  const double length = f.dx * static_cast<double>(n);

  if (guard == TruncationGuard::enforce) {
    const double x_max = -f.x_min;
    double support = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (f.values[i] != 0.0) support = std::max(support, std::abs(f.x(i)));
    if (kernel_tail_mass(t, kappa, x_max - support) > kWrapTolerance) {
      throw TruncationError("heat_convolve: kernel scale sqrt(4 kappa t) = " +
                            std::to_string(std::sqrt(4.0 * kappa * t)) +
                            " too wide for x_max = " + std::to_string(x_max) +
                            " with support radius " + std::to_string(support));
    }
  }

  auto spec = fft::forward(f.values);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double xi = fft::wavenumber(k, length);
    spec[k] *= std::exp(-kappa * t * xi * xi);
  }
  Field out{f.t + t, std::vector<double>(n), f.dx, f.x_min};
  fft::backward(spec, out.values);
  return out;
}

namespace detail {

/// Fourier transform of the unit bump e^{1 - 1/(1-r^2)} on [-1, 1], tabulated
/// once on [0, kBumpOmegaMax] and interpolated with 4-point Lagrange.
class BumpTransformTable {
 public:
  static constexpr double kStep = 0.01;
  static constexpr double kOmegaMax = 200.0;

  static const BumpTransformTable& instance() {
    static const BumpTransformTable table;  // thread-safe one-time init
    return table;
  }

  double operator()(double omega) const {
    omega = std::abs(omega);
    if (omega >= kOmegaMax - 2 * kStep) return 0.0;
    const double pos = omega / kStep;
    auto i = static_cast<std::size_t>(pos);
    if (i == 0) i = 1;
    const double s = pos - static_cast<double>(i);
    const double y0 = v_[i - 1], y1 = v_[i], y2 = v_[i + 1], y3 = v_[i + 2];
    return y0 * (-s * (s - 1) * (s - 2) / 6) + y1 * ((s + 1) * (s - 1) * (s - 2) / 2) +
           y2 * (-(s + 1) * s * (s - 2) / 2) + y3 * ((s + 1) * s * (s - 1) / 6);
  }

  /// Direct evaluation by composite Gauss-Legendre (used to build the table).
  static double direct(double omega) {
    using boost::math::quadrature::gauss;
    const auto panels = static_cast<int>(std::ceil(omega / 2.0)) + 8;
    const double h = 1.0 / panels;
    double sum = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double a = p * h;
      sum += gauss<double, 20>::integrate(
          [omega](double r) {
            if (r >= 1.0) return 0.0;
            return std::exp(1.0 - 1.0 / (1.0 - r * r)) * std::cos(omega * r);
          },
          a, a + h);
    }
    return 2.0 * sum;
  }

 private:
  BumpTransformTable() {
    const auto n = static_cast<std::size_t>(kOmegaMax / kStep) + 2;
    v_.resize(n);
    for (std::size_t i = 0; i < n; ++i) v_[i] = direct(static_cast<double>(i) * kStep);
  }
  std::vector<double> v_;
};

}  // namespace detail

/// Real (even) Fourier transform u0_hat(xi) = int u0(x) e^{-i xi x} dx.
inline double fourier_transform(const InitialData& u0, double xi) {
  const double K = u0.K;
  switch (u0.kind) {
    case InitKind::triangle: {
      const double z = 0.5 * xi * K;
      const double sinc = std::abs(z) < 1e-8 ? 1.0 - z * z / 6.0 : std::sin(z) / z;
      return u0.height * K * sinc * sinc;
    }
    case InitKind::smooth_bump:
      return u0.height * K * detail::BumpTransformTable::instance()(K * xi);
    case InitKind::discrete_delta:
      break;
  }
  throw std::invalid_argument("fourier_transform: unsupported initial profile kind");
}

namespace detail {

/// (1/pi) int_0^inf |u0_hat(xi)|^2 w(xi) dxi, integrating between the zeros of
/// the transform with adaptive Gauss-Kronrod panels.
template <class Weight>
double plancherel_integral(const InitialData& u0, Weight w) {
  using boost::math::quadrature::gauss_kronrod;
  if (u0.kind == InitKind::discrete_delta)
    throw std::invalid_argument("plancherel: unsupported initial profile kind");
  const double K = u0.K;
  const double panel = u0.kind == InitKind::triangle ? 2.0 * kPi / K : 2.0 / K;
  const double xi_max = u0.kind == InitKind::triangle
                            ? 400.0 / K
                            : BumpTransformTable::kOmegaMax / K;
  auto f = [&](double xi) {
    const double h = fourier_transform(u0, xi);
    return h * h * w(xi);
  };
  double sum = 0.0;
  for (double a = 0.0; a < xi_max; a += panel)
    sum += gauss_kronrod<double, 31>::integrate(f, a, std::min(a + panel, xi_max), 8, 1e-14);
  if (u0.kind == InitKind::triangle) {
    // Tail: sin^2 averages to 1/2, so |u0_hat|^2 ~ 8 h^2 / (K^2 xi^4).
    const double h = u0.height;
    sum += gauss_kronrod<double, 31>::integrate(
        [&](double xi) { return 8.0 * h * h / (K * K * xi * xi * xi * xi) * w(xi); }, xi_max,
        20.0 * xi_max, 8, 1e-14);
  }
  return sum / kPi;
}

}  // namespace detail

/// int_0^inf e^{-lambda t} ||p_t * u0||^2 dt via Plancherel:
/// (1/2pi) int_R |u0_hat(xi)|^2 / (lambda + 2 kappa xi^2) dxi.
inline double plancherel_laplace(const InitialData& u0, double lambda, double kappa) {
  if (!(lambda > 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("plancherel_laplace: lambda and kappa must be > 0");
  return detail::plancherel_integral(
      u0, [=](double xi) { return 1.0 / (lambda + 2.0 * kappa * xi * xi); });
}

/// ||p_t * u0||^2 = (1/2pi) int_R |u0_hat(xi)|^2 e^{-2 kappa t xi^2} dxi.
inline double convolved_l2_norm_sq(const InitialData& u0, double t, double kappa) {
  if (!(t >= 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("convolved_l2_norm_sq: t >= 0 and kappa > 0 required");
  return detail::plancherel_integral(
      u0, [=](double xi) { return std::exp(-2.0 * kappa * t * xi * xi); });
}

/// dx * sum of squares.
inline double grid_l2_norm_sq(const Field& f) {
  double s = 0.0;
  for (double v : f.values) s += v * v;
  return s * f.dx;
}

}  // namespace shelab

#endif  // SHELAB_KERNEL_HPP
