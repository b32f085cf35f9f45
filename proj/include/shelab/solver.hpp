#ifndef SHELAB_SOLVER_HPP
#define SHELAB_SOLVER_HPP

// Explicit Euler-Maruyama scheme for du = kappa u_xx dt + sigma(u) dW on
// [-x_max, x_max) with zero Dirichlet ghost cells, and a pathwise Picard
// iteration of the discrete mild formulation driven by the same noise.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shelab/config.hpp"
#include "shelab/errors.hpp"
#include "shelab/fft.hpp"
#include "shelab/kernel.hpp"
#include "shelab/model.hpp"
#include "shelab/noise.hpp"

namespace shelab {

/// Positivity diagnostics of one snapshot.
struct PositivitySample {
  double t = 0.0;
  double min_value = 0.0;
  double negative_mass_fraction = 0.0;  // int u^- / int |u|
  double boundary_mass_fraction = 0.0;  // int_{outer cells} |u| / int |u|
};

struct Trajectory {
  SimConfig config;
  std::uint64_t replicate_index = 0;
  std::vector<Field> snapshots;
  std::vector<PositivitySample> positivity;
};

inline PositivitySample positivity_of(std::span<const double> u, double t) {
  PositivitySample s{t, 0.0, 0.0, 0.0};
  if (u.empty()) return s;
  const std::size_t edge = std::max<std::size_t>(1, u.size() / 100);
  double neg = 0.0, total = 0.0, boundary = 0.0;
  s.min_value = u[0];
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    s.min_value = std::min(s.min_value, u[i]);
    total += a;
    if (u[i] < 0.0) neg += a;
    if (i < edge || i >= u.size() - edge) boundary += a;
  }
  if (total > 0.0) {
    s.negative_mass_fraction = neg / total;
    s.boundary_mass_fraction = boundary / total;
  }
  return s;
}

namespace detail {

/// out_i = u_i + r (u_{i+1} - 2 u_i + u_{i-1}) + sigma(u_i) xi_i with
/// u_{-1} = u_{nx} = 0, where r = kappa dt / dx^2.
inline void explicit_update(std::span<const double> u, std::span<double> out,
                            std::span<const double> xi, double r, const Nonlinearity& sigma) {
  const std::size_t n = u.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? u[i - 1] : 0.0;
    const double right = i + 1 < n ? u[i + 1] : 0.0;
    out[i] = u[i] + r * (right - 2.0 * u[i] + left) + sigma(u[i]) * xi[i];
  }
}

inline void require_explicit(const SimConfig& cfg) {
  if (!cfg.explicit_stable())
    throw ConfigError("explicit scheme unstable: dt = " + format_double(cfg.dt) +
                      " exceeds dx^2/(2 kappa) = " +
                      format_double(cfg.dx() * cfg.dx() / (2.0 * cfg.kappa)));
}

}  // namespace detail

/// One Euler-Maruyama step. `xi` are the N(0, dt/dx) cell increments.
inline Field step_explicit(const Field& u, std::span<const double> xi, const SimConfig& cfg) {
  detail::require_explicit(cfg);
  if (xi.size() != u.values.size())
    throw std::invalid_argument("step_explicit: noise length differs from field length");
  const auto sigma = make_sigma(cfg.sigma);
  Field out{u.t + cfg.dt, std::vector<double>(u.values.size()), u.dx, u.x_min};
  detail::explicit_update(u.values, out.values, xi, cfg.kappa * cfg.dt / (cfg.dx() * cfg.dx()),
                          sigma);
  if (cfg.clip_negative)
    for (auto& v : out.values) v = std::max(v, 0.0);
  if (!out.finite())
    throw NumericalError("step_explicit: non-finite value at t = " + format_double(out.t));
  return out;
}

/// Validated, precomputed pieces shared by every replicate of one config.
class PathRunner {
 public:
  explicit PathRunner(SimConfig cfg)
      : cfg_(std::move(cfg)), sigma_(make_sigma(cfg_.sigma)) {
    cfg_.validate();
    detail::require_explicit(cfg_);
    if (cfg_.x_max < cfg_.init.K + cfg_.m_guard * cfg_.t_end)
      throw ConfigError("x_max = " + format_double(cfg_.x_max) +
                        " is below K + m_guard * t_end = " +
                        format_double(cfg_.init.K + cfg_.m_guard * cfg_.t_end));
    u0_ = make_initial_data(cfg_.init, cfg_.grid());
    for (double t : cfg_.snapshot_times) snapshot_steps_.push_back(cfg_.step_of(t));
  }

  const SimConfig& config() const noexcept { return cfg_; }
  const Nonlinearity& sigma() const noexcept { return sigma_; }
  const Field& initial() const noexcept { return u0_; }
  const std::vector<std::size_t>& snapshot_steps() const noexcept { return snapshot_steps_; }

  /// Runs one replicate and calls visit(snapshot_index, t, u) at every
  /// snapshot time. Throws NumericalError on non-finite values.
  template <class Visitor>
  void run(std::uint64_t replicate_index, Visitor&& visit) const {
    const std::size_t n = cfg_.nx;
    const std::size_t steps = cfg_.n_steps();
    const double dx = cfg_.dx();
    const double r = cfg_.kappa * cfg_.dt / (dx * dx);
    const double variance = cfg_.dt / dx;
    std::vector<double> u = u0_.values, next(n), xi(n);
    NoiseStream stream{cfg_.seed, replicate_index, 0};
    std::size_t snap = 0;
    auto emit = [&](std::size_t step) {
      while (snap < snapshot_steps_.size() && snapshot_steps_[snap] == step) {
        visit(snap, time_of(step), std::span<const double>(u));
        ++snap;
      }
    };
    emit(0);
    for (std::size_t k = 1; k <= steps; ++k) {
      fill_increments(stream, xi, variance);
      detail::explicit_update(u, next, xi, r, sigma_);
      if (cfg_.clip_negative)
        for (auto& v : next) v = std::max(v, 0.0);
      u.swap(next);
      if (k == steps || (snap < snapshot_steps_.size() && snapshot_steps_[snap] == k)) {
        for (double v : u)
          if (!std::isfinite(v))
            throw NumericalError("replicate " + std::to_string(replicate_index) +
                                 ": non-finite value at t = " + format_double(time_of(k)));
      }
      emit(k);
    }
  }

  double time_of(std::size_t step) const {
    return step == cfg_.n_steps() ? cfg_.t_end : static_cast<double>(step) * cfg_.dt;
  }

 private:
  SimConfig cfg_;
  Nonlinearity sigma_;
  Field u0_;
  std::vector<std::size_t> snapshot_steps_;
};

/// One sample path with snapshots at cfg.snapshot_times.
inline Trajectory simulate_path(const SimConfig& cfg, std::uint64_t replicate_index) {
  PathRunner runner(cfg);
  Trajectory traj{runner.config(), replicate_index, {}, {}};
  const double dx = cfg.dx(), x_min = -cfg.x_max;
  runner.run(replicate_index, [&](std::size_t, double t, std::span<const double> u) {
    traj.snapshots.push_back(Field{t, {u.begin(), u.end()}, dx, x_min});
    traj.positivity.push_back(positivity_of(u, t));
  });
  return traj;
}

struct PicardResult {
  std::vector<Field> iterates;       // u^(0) .. u^(n) at t_end
  std::vector<double> differences;   // ||u^(k+1) - u^(k)||_{L^2} at t_end, k = 0..n-1
  Field euler;                       // explicit scheme on the same noise
};

inline constexpr std::size_t kPicardMaxNx = 512;
inline constexpr double kPicardMaxTime = 2.0;

/// Pathwise Picard iteration of the discrete mild form
///   u^(n+1)_{t_k} = p_{t_k} * u0 + sum_{j<k} p_{t_k - t_j} * [sigma(u^(n)_{t_j}) xi_j],
/// with u^(0)_t = u0 and xi_j the same increments the explicit run uses.
inline PicardResult picard_iterate(const SimConfig& cfg, std::uint64_t replicate_index,
                                   std::size_t n_iters) {
  cfg.validate();
  if (cfg.nx > kPicardMaxNx || cfg.t_end > kPicardMaxTime)
    throw ConfigError("picard_iterate: requires nx <= 512 and t_end <= 2");
  const std::size_t n = cfg.nx, steps = cfg.n_steps();
  const Grid grid = cfg.grid();
  const auto sigma = make_sigma(cfg.sigma);
  const Field u0 = make_initial_data(cfg.init, grid);
  auto time_of = [&](std::size_t k) {
    return k == steps ? cfg.t_end : static_cast<double>(k) * cfg.dt;
  };

  // Noise realization and deterministic part, shared by all iterations.
  std::vector<std::vector<double>> noise(steps, std::vector<double>(n));
  NoiseStream stream{cfg.seed, replicate_index, 0};
  for (auto& xi : noise) fill_increments(stream, xi, cfg.dt / grid.dx);
  std::vector<std::vector<double>> free_part(steps + 1);
  free_part[0] = u0.values;
  for (std::size_t k = 1; k <= steps; ++k)
    free_part[k] = heat_convolve(u0, time_of(k), cfg.kappa).values;

  std::vector<double> damp(fft::n_modes(n));
  for (std::size_t m = 0; m < damp.size(); ++m) {
    const double xi = fft::wavenumber(m, grid.length());
    damp[m] = std::exp(-cfg.kappa * cfg.dt * xi * xi);
  }

  PicardResult result;
  std::vector<std::vector<double>> path(steps + 1, u0.values);  // u^(0)
  result.iterates.push_back(Field{cfg.t_end, path[steps], grid.dx, grid.x_min});

  std::vector<fft::cplx> acc(damp.size()), spec(damp.size());
  std::vector<double> forcing(n), stoch(n);
  for (std::size_t it = 0; it < n_iters; ++it) {
    std::vector<std::vector<double>> next(steps + 1);
    next[0] = u0.values;
    std::fill(acc.begin(), acc.end(), fft::cplx{});
    for (std::size_t k = 1; k <= steps; ++k) {
      const auto& prev = path[k - 1];
      for (std::size_t i = 0; i < n; ++i) forcing[i] = sigma(prev[i]) * noise[k - 1][i];
      fft::forward(forcing, spec);
      for (std::size_t m = 0; m < acc.size(); ++m) acc[m] = damp[m] * (acc[m] + spec[m]);
      spec = acc;
      fft::backward(spec, stoch);
      next[k].resize(n);
      for (std::size_t i = 0; i < n; ++i) next[k][i] = free_part[k][i] + stoch[i];
    }
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = next[steps][i] - path[steps][i];
      d2 += d * d;
    }
    result.differences.push_back(std::sqrt(d2 * grid.dx));
    path = std::move(next);
    result.iterates.push_back(Field{cfg.t_end, path[steps], grid.dx, grid.x_min});
  }

  // Explicit comparator on the identical increments (requires stability).
  if (cfg.explicit_stable()) {
    std::vector<double> u = u0.values, out(n);
    const double r = cfg.kappa * cfg.dt / (grid.dx * grid.dx);
    for (std::size_t k = 0; k < steps; ++k) {
      detail::explicit_update(u, out, noise[k], r, sigma);
      u.swap(out);
    }
    result.euler = Field{cfg.t_end, std::move(u), grid.dx, grid.x_min};
  }
  return result;
}

}  // namespace shelab

#endif  // SHELAB_SOLVER_HPP
