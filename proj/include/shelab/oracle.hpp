#ifndef SHELAB_ORACLE_HPP
#define SHELAB_ORACLE_HPP

// Deterministic second-moment dynamics of the linear (parabolic Anderson)
// equation, sigma(u) = lambda u. The pointwise second moment solves
//
//   f_t(x) = (p_t * u0)(x)^2 + lambda^2 int_0^t (p_{t-s}^2 * f_s)(x) ds,
//
// where p_tau^2 is a Gaussian of variance kappa tau and total mass
// (8 pi kappa tau)^{-1/2}. In Fourier space every mode is an independent
// scalar Volterra equation with kernel c tau^{-1/2} exp(-kappa xi^2 tau / 2),
// c = (8 pi kappa)^{-1/2}; it is discretized by product integration
// (piecewise-linear f, kernel integrated exactly over each time cell).

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "shelab/config.hpp"
#include "shelab/errors.hpp"
#include "shelab/fft.hpp"
#include "shelab/kernel.hpp"
#include "shelab/model.hpp"

namespace shelab {

struct MomentField {
  double t = 0.0;
  std::vector<double> values;  // E|u_t(x)|^2
  double dx = 1.0;
  double x_min = 0.0;

  double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx; }
  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * dx;
  }
};

namespace detail {

/// int_0^x tau^{nu-1} e^{-beta tau} dtau for nu in {1/2, 3/2}, beta >= 0.
inline double lower_gamma_scaled(double nu, double beta, double x) {
  if (x <= 0.0) return 0.0;
  const double bx = beta * x;
  if (bx <= 1.0) {
    double term = 1.0, sum = 0.0;
    for (int k = 0; k < 40; ++k) {
      const double add = term / (k + nu);
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
      term *= -bx / (k + 1);
    }
    return std::pow(x, nu) * sum;
  }
  const double z = std::sqrt(bx);
  if (nu == 0.5) return std::sqrt(kPi / beta) * std::erf(z);
  return std::pow(beta, -1.5) * (0.5 * std::sqrt(kPi) * std::erf(z) - z * std::exp(-bx));
}

/// Integral of the same integrand over [a, b]; uses erfc differences when
/// both ends sit in the exponentially small regime.
inline double gamma_cell(double nu, double beta, double a, double b) {
  if (beta * a > 1.0) {
    const double za = std::sqrt(beta * a), zb = std::sqrt(beta * b);
    const double derfc = std::erfc(za) - std::erfc(zb);
    if (nu == 0.5) return std::sqrt(kPi / beta) * derfc;
    return std::pow(beta, -1.5) *
           (0.5 * std::sqrt(kPi) * derfc + za * std::exp(-za * za) - zb * std::exp(-zb * zb));
  }
  return lower_gamma_scaled(nu, beta, b) - lower_gamma_scaled(nu, beta, a);
}

/// Product-integration weights of cell m >= 1 (tau in [(m-1)h, mh]) for the
/// kernel c tau^{-1/2} e^{-beta tau}: `newer` multiplies f at s = t - (m-1)h,
/// `older` multiplies f at s = t - mh.
struct CellWeights {
  double newer = 0.0;
  double older = 0.0;
};

inline CellWeights cell_weights(double c, double beta, double h, std::size_t m) {
  const double a = static_cast<double>(m - 1) * h, b = static_cast<double>(m) * h;
  const double i0 = c * gamma_cell(0.5, beta, a, b);
  const double i1 = c * gamma_cell(1.5, beta, a, b);
  // f linear in tau: f(tau) = f_newer (b - tau)/h + f_older (tau - a)/h
  return {(b * i0 - i1) / h, (i1 - a * i0) / h};
}

}  // namespace detail

struct SecondMomentSolution {
  std::vector<MomentField> fields;
  double boundary_ratio = 0.0;  // max boundary value / max value over all fields
  bool boundary_ok() const { return boundary_ratio < 1e-10; }
};

/// Solves the second-moment Volterra equation for linear sigma on the grid of
/// `cfg` with time step cfg.dt up to cfg.t_end. Fields are returned at every
/// `output_stride`-th step (always including t = 0 and t_end).
inline SecondMomentSolution solve_second_moment_volterra(const SimConfig& cfg,
                                                         std::size_t output_stride = 1) {
  cfg.validate();
  if (cfg.sigma.kind != SigmaKind::linear)
    throw ConfigError("second-moment Volterra identity requires linear sigma");
  if (cfg.init.kind == InitKind::discrete_delta)
    throw ConfigError("second-moment Volterra solve needs an L^2 initial profile");
  if (kernel_tail_mass(cfg.t_end, cfg.kappa, cfg.x_max - cfg.init.K) > kWrapTolerance)
    throw TruncationError("Volterra solve: x_max = " + format_double(cfg.x_max) +
                          " too small for t_end = " + format_double(cfg.t_end));
  if (output_stride == 0) output_stride = 1;

  const Grid grid = cfg.grid();
  const std::size_t n = grid.nx, modes = fft::n_modes(n), steps = cfg.n_steps();
  const double h = cfg.dt, lam2 = cfg.sigma.lambda * cfg.sigma.lambda;
  const double c = 1.0 / std::sqrt(8.0 * kPi * cfg.kappa);
  const Field u0 = make_initial_data(cfg.init, grid);
  const auto u0_hat = fft::forward(u0.values);

  std::vector<double> beta(modes), decay(modes);
  for (std::size_t m = 0; m < modes; ++m) {
    const double xi = fft::wavenumber(m, grid.length());
    beta[m] = 0.5 * cfg.kappa * xi * xi;
    decay[m] = cfg.kappa * xi * xi;
  }

  // combined[m-1][mode]: weight of f_j at lag m = k - j (j >= 1);
  // first[k-1][mode]: weight of f_0 at lag k; diag: weight of f_k itself.
  std::vector<std::vector<double>> combined(steps), first(steps);
  std::vector<double> diag(modes);
  {
    std::vector<detail::CellWeights> prev(modes);
    for (std::size_t mode = 0; mode < modes; ++mode) {
      prev[mode] = detail::cell_weights(c, beta[mode], h, 1);
      diag[mode] = prev[mode].newer;
    }
    for (std::size_t lag = 1; lag <= steps; ++lag) {
      combined[lag - 1].resize(modes);
      first[lag - 1].resize(modes);
      for (std::size_t mode = 0; mode < modes; ++mode) {
        const auto next = detail::cell_weights(c, beta[mode], h, lag + 1);
        first[lag - 1][mode] = prev[mode].older;
        combined[lag - 1][mode] = prev[mode].older + next.newer;
        prev[mode] = next;
      }
    }
  }

  auto time_of = [&](std::size_t k) {
    return k == steps ? cfg.t_end : static_cast<double>(k) * h;
  };
  std::vector<double> real(n);
  std::vector<fft::cplx> buf(modes);
  auto free_term = [&](std::size_t k) {
    const double t = time_of(k);
    for (std::size_t m = 0; m < modes; ++m) buf[m] = u0_hat[m] * std::exp(-decay[m] * t);
    fft::backward(buf, real);
    for (auto& v : real) v *= v;
    return fft::forward(real);
  };

  std::vector<std::vector<fft::cplx>> history;
  history.reserve(steps + 1);
  history.push_back(free_term(0));

  SecondMomentSolution sol;
  double max_value = 0.0, max_boundary = 0.0;
  auto emit = [&](std::size_t k) {
    buf = history[k];
    MomentField mf{time_of(k), std::vector<double>(n), grid.dx, grid.x_min};
    fft::backward(buf, mf.values);
    for (double v : mf.values) max_value = std::max(max_value, v);
    max_boundary = std::max({max_boundary, std::abs(mf.values.front()), std::abs(mf.values.back())});
    sol.fields.push_back(std::move(mf));
  };
  emit(0);

  std::vector<fft::cplx> acc(modes);
  for (std::size_t k = 1; k <= steps; ++k) {
    acc = free_term(k);
    if (lam2 != 0.0) {
      std::vector<fft::cplx> conv(modes);
      const auto& w0 = first[k - 1];
      for (std::size_t m = 0; m < modes; ++m) conv[m] = w0[m] * history[0][m];
      for (std::size_t j = 1; j < k; ++j) {
        const auto& w = combined[k - j - 1];
        const auto& fj = history[j];
        for (std::size_t m = 0; m < modes; ++m) conv[m] += w[m] * fj[m];
      }
      for (std::size_t m = 0; m < modes; ++m)
        acc[m] = (acc[m] + lam2 * conv[m]) / (1.0 - lam2 * diag[m]);
    }
    history.push_back(acc);
    if (k % output_stride == 0 || k == steps) emit(k);
  }
  sol.boundary_ratio = max_value > 0.0 ? max_boundary / max_value : 0.0;
  return sol;
}

/// Time series of the L^2 mass E||u_t||^2 on a uniform time grid.
struct MassSeries {
  std::vector<double> times;
  std::vector<double> mass;
};

/// Scalar renewal equation for the L^2 mass of the linear equation,
///   M(t) = ||p_t * u0||^2 + lambda^2 int_0^t (8 pi kappa (t-s))^{-1/2} M(s) ds,
/// with the free term evaluated by Plancherel quadrature.
inline MassSeries solve_l2_mass_volterra(double lambda, double kappa, const InitialData& u0,
                                         double dt, double t_end) {
  if (!(dt > 0.0) || !(t_end > 0.0) || !(kappa > 0.0))
    throw std::invalid_argument("solve_l2_mass_volterra: dt, t_end, kappa must be > 0");
  const auto steps = static_cast<std::size_t>(std::llround(t_end / dt));
  const double c = 1.0 / std::sqrt(8.0 * kPi * kappa), lam2 = lambda * lambda;
  std::vector<double> newer(steps + 2), older(steps + 2);
  for (std::size_t m = 1; m <= steps + 1; ++m) {
    const auto w = detail::cell_weights(c, 0.0, dt, m);
    newer[m] = w.newer;
    older[m] = w.older;
  }
  MassSeries s;
  s.times.resize(steps + 1);
  s.mass.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    s.times[k] = k == steps ? t_end : static_cast<double>(k) * dt;
    double conv = 0.0;
    if (k > 0) {
      conv = older[k] * s.mass[0];
      for (std::size_t j = 1; j < k; ++j) conv += (older[k - j] + newer[k - j + 1]) * s.mass[j];
    }
    const double g = convolved_l2_norm_sq(u0, s.times[k], kappa);
    s.mass[k] = k == 0 ? g : (g + lam2 * conv) / (1.0 - lam2 * newer[1]);
  }
  return s;
}

inline MassSeries mass_series(const std::vector<MomentField>& fields) {
  MassSeries s;
  for (const auto& f : fields) {
    s.times.push_back(f.t);
    s.mass.push_back(f.mass());
  }
  return s;
}

/// Result of the Picard recursion M^(n+1) = ||u0||^2 + q M^(n),
/// q = lip^2 / (2 sqrt(2 kappa lambda)).
struct PicardBound {
  std::vector<double> iterates;
  double q = 0.0;
  bool divergent = false;
  double fixed_point = std::numeric_limits<double>::infinity();
};

inline PicardBound picard_moment_bound(double lambda, double lip, double kappa, double u0_l2_sq,
                                       std::size_t n) {
  if (!(lambda > 0.0)) throw std::invalid_argument("picard_moment_bound: lambda must be > 0");
  if (!(kappa > 0.0) || lip < 0.0 || u0_l2_sq < 0.0)
    throw std::invalid_argument("picard_moment_bound: invalid arguments");
  PicardBound b;
  b.q = lip * lip * laplace_kernel_l2(lambda, kappa);
  b.iterates.push_back(u0_l2_sq);
  for (std::size_t i = 0; i < n; ++i) b.iterates.push_back(u0_l2_sq + b.q * b.iterates.back());
  // Compare against the threshold itself so that lambda == lip^4/(8 kappa)
  // is flagged regardless of rounding in q.
  b.divergent = b.q >= 1.0 || (lip > 0.0 && lambda <= lyapunov_threshold(lip, kappa));
  if (!b.divergent) b.fixed_point = u0_l2_sq / (1.0 - b.q);
  return b;
}

/// Lower-bound certificate: with q_low = low^2 / (2 sqrt(2 kappa lambda)),
/// U(lambda) >= fourier_term + q_low U(lambda) forces U(lambda) = infinity
/// once q_low >= 1 and fourier_term > 0.
struct LowerBoundCertificate {
  double fourier_term = 0.0;
  double q_low = 0.0;
  bool consistent = false;  // true: finite U(lambda) is impossible
};

inline LowerBoundCertificate lower_bound_certificate(double lambda, double low, double kappa,
                                                     const InitialData& u0) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lower_bound_certificate: lambda must be > 0");
  LowerBoundCertificate c;
  c.fourier_term = plancherel_laplace(u0, lambda, kappa);
  c.q_low = low * low * laplace_kernel_l2(lambda, kappa);
  const bool at_or_below = low > 0.0 && lambda <= lyapunov_threshold(low, kappa);
  c.consistent = (c.q_low >= 1.0 || at_or_below) && c.fourier_term > 0.0;
  return c;
}

/// Trapezoidal Laplace transform of a mass series with tail diagnostics.
struct LaplaceValue {
  double value = 0.0;
  double tail_ratio = 0.0;  // e^{-lambda t_end} M(t_end) / value
  bool tail_warning = false;
};

inline LaplaceValue laplace_U_numeric(const MassSeries& s, double lambda) {
  if (s.times.empty()) throw std::invalid_argument("laplace_U_numeric: empty input");
  LaplaceValue out;
  for (std::size_t k = 1; k < s.times.size(); ++k) {
    const double h = s.times[k] - s.times[k - 1];
    out.value += 0.5 * h *
                 (std::exp(-lambda * s.times[k - 1]) * s.mass[k - 1] +
                  std::exp(-lambda * s.times[k]) * s.mass[k]);
  }
  const double last = std::exp(-lambda * s.times.back()) * s.mass.back();
  out.tail_ratio = out.value > 0.0 ? last / out.value : (last > 0.0 ? 1.0 : 0.0);
  out.tail_warning = out.tail_ratio > 1e-6;
  return out;
}

inline LaplaceValue laplace_U_numeric(const std::vector<MomentField>& fields, double lambda) {
  if (fields.empty()) throw std::invalid_argument("laplace_U_numeric: empty input");
  return laplace_U_numeric(mass_series(fields), lambda);
}

/// Flat record of the Laplace-domain analysis at one lambda.
struct LaplaceReport {
  double lambda = 0.0;
  double U_value = 0.0;
  bool U_infinite = false;
  double fixed_point_bound = 0.0;
  bool fixed_point_divergent = false;
  double threshold_lower = 0.0;
  double threshold_upper = 0.0;
};

inline LaplaceReport make_laplace_report(double lambda, double low, double lip, double kappa,
                                         const InitialData& u0,
                                         std::optional<double> U_numeric = std::nullopt) {
  LaplaceReport r;
  r.lambda = lambda;
  r.threshold_lower = lyapunov_threshold(low, kappa);
  r.threshold_upper = lyapunov_threshold(lip, kappa);
  const auto cert = lower_bound_certificate(lambda, low, kappa, u0);
  const double u0_l2 = convolved_l2_norm_sq(u0, 0.0, kappa);
  const auto bound = picard_moment_bound(lambda, lip, kappa, u0_l2, 0);
  r.fixed_point_divergent = bound.divergent;
  r.fixed_point_bound = bound.fixed_point;
  r.U_infinite = cert.consistent;
  r.U_value = r.U_infinite ? std::numeric_limits<double>::infinity() : U_numeric.value_or(0.0);
  return r;
}

}  // namespace shelab

#endif  // SHELAB_ORACLE_HPP
