#ifndef SHELAB_MODEL_HPP
#define SHELAB_MODEL_HPP

// Domain types: the nonlinearity sigma, compactly supported initial profiles,
// the spatial grid, solution fields and the simulation configuration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "shelab/errors.hpp"

namespace shelab {

enum class SigmaKind { linear, modulated };

inline std::string_view to_string(SigmaKind k) {
  return k == SigmaKind::linear ? "linear" : "modulated";
}

inline SigmaKind sigma_kind_from_string(std::string_view s) {
  if (s == "linear") return SigmaKind::linear;
  if (s == "modulated") return SigmaKind::modulated;
  throw ConfigError("unknown sigma.kind '" + std::string(s) + "'");
}

/// Declared nonlinearity. For `linear`, sigma(u) = lambda*u and lip = low =
/// lambda. For `modulated`, sigma(u) = u*(c1 + c2*sin u) with envelope
/// constants low = c1 - c2 and lip = c1 + c2.
struct SigmaSpec {
  SigmaKind kind = SigmaKind::linear;
  double lambda = 1.0;
  double c1 = 1.0;
  double c2 = 0.0;
  double lip = 1.0;
  double low = 1.0;

  static SigmaSpec linear(double lambda) {
    return {SigmaKind::linear, lambda, 0.0, 0.0, lambda, lambda};
  }
  static SigmaSpec modulated(double c1, double c2) {
    return {SigmaKind::modulated, 0.0, c1, c2, c1 + c2, c1 - c2};
  }
};

/// Validated nonlinearity. Immutable; cheap to copy.
class Nonlinearity {
 public:
  double operator()(double u) const noexcept {
    if (spec_.kind == SigmaKind::linear) return spec_.lambda * u;
    return u * (spec_.c1 + spec_.c2 * std::sin(u));
  }

  double lip() const noexcept { return spec_.lip; }
  double low() const noexcept { return spec_.low; }
  const SigmaSpec& spec() const noexcept { return spec_; }
  bool is_linear() const noexcept { return spec_.kind == SigmaKind::linear; }

  /// Largest |sigma(a)-sigma(b)|/|a-b| over `pairs` random pairs in
  /// [-range, range]. Diagnostic only; the modulated family is not globally
  /// Lipschitz, so this grows with `range`.
  double sampled_difference_quotient(std::size_t pairs = 100000,
                                     double range = 100.0) const {
    std::mt19937_64 gen(0x5eed);
    std::uniform_real_distribution<double> dist(-range, range);
    double worst = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
      const double a = dist(gen);
      const double b = dist(gen);
      if (a == b) continue;
      worst = std::max(worst, std::abs(((*this)(a) - (*this)(b)) / (a - b)));
    }
    return worst;
  }

 private:
  explicit Nonlinearity(SigmaSpec s) : spec_(s) {}
  friend Nonlinearity make_sigma(const SigmaSpec& spec);

  SigmaSpec spec_;
};

/// Validation grid for the linear envelope: {0} and +-10^j, j = -6..6.
inline std::vector<double> sigma_validation_grid() {
  std::vector<double> g{0.0};
  for (int j = -6; j <= 6; ++j) {
    const double v = std::pow(10.0, j);
    g.push_back(v);
    g.push_back(-v);
  }
  return g;
}

inline Nonlinearity make_sigma(const SigmaSpec& spec) {
  using detail::require;
  SigmaSpec s = spec;
  if (s.kind == SigmaKind::linear) {
    // lambda = 0 gives the noiseless equation, used for deterministic checks.
    require(std::isfinite(s.lambda) && s.lambda >= 0.0,
            "sigma.lambda must be finite and >= 0");
    require(s.lip == s.lambda && s.low == s.lambda,
            "linear sigma requires lip = low = lambda");
  } else {
    require(std::isfinite(s.c1) && std::isfinite(s.c2),
            "sigma.c1, sigma.c2 must be finite");
    require(s.c1 > s.c2 && s.c2 >= 0.0, "modulated sigma requires c1 > c2 >= 0");
    require(s.low > 0.0 && s.lip > 0.0, "sigma.low and sigma.lip must be > 0");
  }
  require(s.low <= s.lip, "sigma.low must not exceed sigma.lip");

  Nonlinearity sigma(s);
  if (sigma(0.0) != 0.0) throw ConfigError("sigma(0) must be 0");
  constexpr double rel = 1e-12;
  for (double u : sigma_validation_grid()) {
    const double au = std::abs(u);
    const double v = std::abs(sigma(u));
    if (v > s.lip * au * (1.0 + rel) || v < s.low * au * (1.0 - rel)) {
      throw ConfigError("sigma violates declared envelope [low*|u|, lip*|u|] at u = " +
                        std::to_string(u));
    }
  }
  return sigma;
}

enum class InitKind { triangle, smooth_bump, discrete_delta };

inline std::string_view to_string(InitKind k) {
  switch (k) {
    case InitKind::triangle: return "triangle";
    case InitKind::smooth_bump: return "smooth_bump";
    case InitKind::discrete_delta: return "discrete_delta";
  }
  return "?";
}

inline InitKind init_kind_from_string(std::string_view s) {
  if (s == "triangle") return InitKind::triangle;
  if (s == "smooth_bump") return InitKind::smooth_bump;
  if (s == "discrete_delta") return InitKind::discrete_delta;
  throw ConfigError("unknown init.kind '" + std::string(s) + "'");
}

/// Nonnegative initial profile supported in [-K, K]. For `discrete_delta`,
/// `height` is the total mass placed on the grid cell at x = 0.
struct InitialData {
  InitKind kind = InitKind::triangle;
  double K = 1.0;
  double height = 1.0;

  /// Pointwise profile (not defined for discrete_delta, which returns 0).
  double operator()(double x) const noexcept {
    const double r = std::abs(x) / K;
    if (r >= 1.0) return 0.0;
    switch (kind) {
      case InitKind::triangle: return height * (1.0 - r);
      case InitKind::smooth_bump: return height * std::exp(1.0 - 1.0 / (1.0 - r * r));
      case InitKind::discrete_delta: return 0.0;
    }
    return 0.0;
  }
};

/// Uniform periodic-style grid: x_i = x_min + i*dx, i = 0..nx-1, with
/// x_min = -x_max and dx = 2*x_max/nx. Point x = 0 is node nx/2 for even nx.
struct Grid {
  double x_min = -1.0;
  double dx = 1.0;
  std::size_t nx = 2;

  static Grid symmetric(double x_max, std::size_t nx) {
    detail::require(x_max > 0.0 && nx >= 2, "grid requires x_max > 0, nx >= 2");
    return {-x_max, 2.0 * x_max / static_cast<double>(nx), nx};
  }
  double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx; }
  double x_max() const noexcept { return -x_min; }
  double length() const noexcept { return dx * static_cast<double>(nx); }
};

/// Solution profile at a single time.
struct Field {
  double t = 0.0;
  std::vector<double> values;
  double dx = 1.0;
  double x_min = 0.0;

  Grid grid() const { return {x_min, dx, values.size()}; }
  double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx; }
  bool finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Samples the initial profile on `grid`.
inline Field make_initial_data(const InitialData& init, const Grid& grid) {
  using detail::require;
  require(init.K > 0.0 && std::isfinite(init.K), "init.K must be > 0");
  require(init.height > 0.0 && std::isfinite(init.height), "init.height must be > 0");
  require(init.K < grid.x_max(), "init.K must be smaller than x_max");

  Field f{0.0, std::vector<double>(grid.nx, 0.0), grid.dx, grid.x_min};
  if (init.kind == InitKind::discrete_delta) {
    // x = 0 must be a node and the cell must lie inside [-K, K].
    const double pos = -grid.x_min / grid.dx;
    const auto idx = static_cast<std::size_t>(std::llround(pos));
    require(std::abs(pos - static_cast<double>(idx)) < 1e-9 && idx < grid.nx,
            "discrete_delta requires x = 0 to be a grid node");
    require(0.5 * grid.dx <= init.K, "discrete_delta cell wider than the support [-K, K]");
    f.values[idx] = init.height / grid.dx;
    return f;
  }
  for (std::size_t i = 0; i < grid.nx; ++i) f.values[i] = init(grid.x(i));
  return f;
}

/// Complete description of one experiment. Field names double as the keys of
/// the configuration file format (see config.hpp).
struct SimConfig {
  double kappa = 1.0;
  SigmaSpec sigma = SigmaSpec::linear(1.0);
  InitialData init{};
  double x_max = 10.0;
  std::size_t nx = 200;
  double dt = 0.0025;
  double t_end = 1.0;
  std::vector<double> snapshot_times{1.0};
  std::string boundary = "dirichlet";
  std::uint64_t seed = 1;
  // scheme options
  bool clip_negative = false;
  double m_guard = 3.0;

  Grid grid() const { return Grid::symmetric(x_max, nx); }
  double dx() const { return 2.0 * x_max / static_cast<double>(nx); }
  std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(t_end / dt)); }

  /// Step index of snapshot time `t` (validated to be a multiple of dt).
  std::size_t step_of(double t) const {
    return static_cast<std::size_t>(std::llround(t / dt));
  }

  /// Checks everything except scheme stability (see explicit_stable()).
  void validate() const {
    using detail::require;
    require(std::isfinite(kappa) && kappa > 0.0, "kappa must be > 0");
    require(std::isfinite(x_max) && x_max > 0.0, "x_max must be > 0");
    require(nx >= 4, "nx must be >= 4");
    require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
    require(std::isfinite(t_end) && t_end > 0.0, "t_end must be > 0");
    require(boundary == "dirichlet", "boundary must be 'dirichlet'");
    require(init.K < x_max, "init.K must be smaller than x_max");
    require(init.K > 0.0 && init.height > 0.0, "init.K and init.height must be > 0");
    require(m_guard >= 0.0, "m_guard must be >= 0");
    const double steps = t_end / dt;
    require(std::abs(steps - std::round(steps)) < 1e-6 * std::max(1.0, steps),
            "t_end must be a multiple of dt");
    require(std::is_sorted(snapshot_times.begin(), snapshot_times.end()),
            "snapshot_times must be sorted");
    for (double t : snapshot_times) {
      require(t >= 0.0 && t <= t_end * (1.0 + 1e-12), "snapshot_times must lie in [0, t_end]");
      const double k = t / dt;
      require(std::abs(k - std::round(k)) < 1e-6 * std::max(1.0, k),
              "snapshot_times must be multiples of dt");
    }
    (void)make_sigma(sigma);
  }

  /// dt <= dx^2 / (2 kappa).
  bool explicit_stable() const { return dt <= dx() * dx() / (2.0 * kappa) * (1.0 + 1e-12); }
};

}  // namespace shelab

#endif  // SHELAB_MODEL_HPP
