#ifndef SHELAB_ESTIMATORS_HPP
#define SHELAB_ESTIMATORS_HPP

// Monte Carlo aggregation and the diagnostics built on it: moment growth
// rates, spatial decay, effective support, Hoelder increments, peak
// concentration and the slowly-varying integral check.
//
// Reductions are deterministic: replicates are grouped into fixed chunks in
// index order, each chunk is reduced sequentially, and chunk results are
// merged pairwise in index order. The thread count only decides which worker
// runs a chunk.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shelab/errors.hpp"
#include "shelab/kernel.hpp"
#include "shelab/model.hpp"
#include "shelab/oracle.hpp"
#include "shelab/parallel.hpp"
#include "shelab/solver.hpp"

namespace shelab {

/// Mergeable mean/variance accumulator (Welford with Chan's combine).
struct RunningStats {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  double max = -std::numeric_limits<double>::infinity();

  void add(double x) noexcept {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
    max = std::max(max, x);
  }

  static RunningStats merge(const RunningStats& a, const RunningStats& b) noexcept {
    if (a.n == 0.0) return b;
    if (b.n == 0.0) return a;
    RunningStats r;
    r.n = a.n + b.n;
    const double d = b.mean - a.mean;
    r.mean = a.mean + d * (b.n / r.n);
    r.m2 = a.m2 + b.m2 + d * d * (a.n * b.n / r.n);
    r.max = std::max(a.max, b.max);
    return r;
  }

  double variance() const noexcept { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  /// Standard error of the mean; equals the jackknife standard error.
  double stderr_mean() const noexcept { return n > 1.0 ? std::sqrt(variance() / n) : 0.0; }
};

/// Leave-one-out jackknife standard error of estimator(sample) where the
/// estimator is a function of the p-th power sums. `loo(i)` must return the
/// estimate with sample i removed.
template <class LeaveOneOut>
double jackknife_stderr(std::size_t n, LeaveOneOut loo) {
  if (n < 2) throw std::invalid_argument("jackknife_stderr: need n >= 2");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = loo(i);
  const double mean = pairwise_sum(v.begin(), v.end()) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
}

inline constexpr std::size_t kReductionChunk = 16;

/// Per-snapshot statistics of `width` observed quantities.
struct ReplicateReduction {
  std::size_t n_snapshots = 0;
  std::size_t width = 0;
  std::vector<RunningStats> stats;  // [snapshot * width + j]
  std::size_t n_ok = 0;
  std::vector<std::uint64_t> failed;

  const RunningStats& at(std::size_t snap, std::size_t j) const { return stats[snap * width + j]; }
};

/// Runs replicates 0..n_reps-1 and reduces what `observe(snapshot, t, u, out)`
/// writes into out[0..width). A replicate that throws NumericalError is
/// excluded; more than 1% failures abort the run.
template <class Observe>
ReplicateReduction reduce_replicates(const PathRunner& runner, std::size_t n_reps,
                                     unsigned threads, std::size_t width, Observe observe) {
  const std::size_t n_snap = runner.snapshot_steps().size();
  const std::size_t n_chunks = (n_reps + kReductionChunk - 1) / kReductionChunk;
  struct Chunk {
    std::vector<RunningStats> stats;
    std::vector<std::uint64_t> failed;
  };
  std::vector<Chunk> chunks(n_chunks);

  parallel_for(n_chunks, threads, [&](std::size_t c) {
    Chunk& chunk = chunks[c];
    chunk.stats.assign(n_snap * width, RunningStats{});
    std::vector<double> buffer(n_snap * width);
    const std::size_t end = std::min(n_reps, (c + 1) * kReductionChunk);
    for (std::size_t rep = c * kReductionChunk; rep < end; ++rep) {
      try {
        runner.run(rep, [&](std::size_t snap, double t, std::span<const double> u) {
          observe(snap, t, u, std::span<double>(buffer).subspan(snap * width, width));
        });
      } catch (const NumericalError&) {
        chunk.failed.push_back(rep);
        continue;
      }
      for (std::size_t j = 0; j < buffer.size(); ++j) chunk.stats[j].add(buffer[j]);
    }
  });

  // Pairwise merge in chunk order.
  for (std::size_t stride = 1; stride < n_chunks; stride *= 2) {
    for (std::size_t c = 0; c + stride < n_chunks; c += 2 * stride) {
      auto& a = chunks[c].stats;
      const auto& b = chunks[c + stride].stats;
      for (std::size_t j = 0; j < a.size(); ++j) a[j] = RunningStats::merge(a[j], b[j]);
    }
  }

  ReplicateReduction r;
  r.n_snapshots = n_snap;
  r.width = width;
  for (const auto& c : chunks) r.failed.insert(r.failed.end(), c.failed.begin(), c.failed.end());
  r.n_ok = n_reps - r.failed.size();
  if (n_chunks > 0) r.stats = std::move(chunks[0].stats);
  if (static_cast<double>(r.failed.size()) > 0.01 * static_cast<double>(n_reps))
    throw NumericalError(std::to_string(r.failed.size()) + " of " + std::to_string(n_reps) +
                         " replicates failed (limit 1%)");
  return r;
}

enum class MomentKind { sup_sq, l2_sq, pointwise_k };

inline std::string_view to_string(MomentKind k) {
  switch (k) {
    case MomentKind::sup_sq: return "sup_sq";
    case MomentKind::l2_sq: return "l2_sq";
    case MomentKind::pointwise_k: return "pointwise_k";
  }
  return "?";
}

/// Scalar moment functional per snapshot time.
struct MomentSeries {
  MomentKind kind = MomentKind::sup_sq;
  int k = 2;
  std::vector<double> times;
  std::vector<double> estimates;
  std::vector<double> stderrs;
  std::size_t n_replicates = 0;
};

/// Pointwise E|u_t(x)|^k profile at one time.
struct MomentProfile {
  double t = 0.0;
  int k = 2;
  double x_min = 0.0;
  double dx = 1.0;
  std::vector<double> mean;
  std::vector<double> stderrs;

  double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx; }
};

struct MomentRequest {
  bool sup_sq = true;
  bool l2_sq = true;
  std::vector<int> pointwise_orders;  // e.g. {2} or {1, 2, 3, 4}
};

struct McMoments {
  std::optional<MomentSeries> sup_sq;
  std::optional<MomentSeries> l2_sq;
  std::vector<std::vector<MomentProfile>> profiles;  // [order index][snapshot]
  std::vector<double> times;
  std::vector<double> negative_fraction_mean;  // per snapshot
  std::vector<double> negative_fraction_max;
  std::vector<double> boundary_fraction_max;
  std::size_t n_replicates = 0;
  std::size_t n_failed = 0;
};

/// Sample means and standard errors over n_reps replicates of the moment
/// functionals in `req`, plus positivity diagnostics at every snapshot.
inline McMoments mc_moments(const SimConfig& cfg, std::size_t n_reps, const MomentRequest& req,
                            unsigned threads = 1) {
  if (n_reps < 2) throw ConfigError("mc_moments: need at least 2 replicates");
  const PathRunner runner(cfg);
  const std::size_t nx = cfg.nx;
  const double dx = cfg.dx();
  // Layout per snapshot: [sup, l2, neg, boundary, pointwise orders x nx]
  constexpr std::size_t kFixed = 4;
  const std::size_t width = kFixed + req.pointwise_orders.size() * nx;
  auto red = reduce_replicates(
      runner, n_reps, threads, width,
      [&](std::size_t, double t, std::span<const double> u, std::span<double> out) {
        double sup = 0.0, l2 = 0.0;
        for (double v : u) {
          sup = std::max(sup, v * v);
          l2 += v * v;
        }
        const auto pos = positivity_of(u, t);
        out[0] = sup;
        out[1] = l2 * dx;
        out[2] = pos.negative_mass_fraction;
        out[3] = pos.boundary_mass_fraction;
        for (std::size_t o = 0; o < req.pointwise_orders.size(); ++o) {
          const int k = req.pointwise_orders[o];
          auto dst = out.subspan(kFixed + o * nx, nx);
          for (std::size_t i = 0; i < nx; ++i) dst[i] = std::pow(std::abs(u[i]), k);
        }
      });

  McMoments m;
  m.n_replicates = red.n_ok;
  m.n_failed = red.failed.size();
  for (std::size_t s = 0; s < red.n_snapshots; ++s)
    m.times.push_back(runner.time_of(runner.snapshot_steps()[s]));
  auto series = [&](MomentKind kind, std::size_t j) {
    MomentSeries out{kind, 2, m.times, {}, {}, red.n_ok};
    for (std::size_t s = 0; s < red.n_snapshots; ++s) {
      out.estimates.push_back(red.at(s, j).mean);
      out.stderrs.push_back(red.at(s, j).stderr_mean());
    }
    return out;
  };
  if (req.sup_sq) m.sup_sq = series(MomentKind::sup_sq, 0);
  if (req.l2_sq) m.l2_sq = series(MomentKind::l2_sq, 1);
  for (std::size_t s = 0; s < red.n_snapshots; ++s) {
    m.negative_fraction_mean.push_back(red.at(s, 2).mean);
    m.negative_fraction_max.push_back(red.at(s, 2).max);
    m.boundary_fraction_max.push_back(red.at(s, 3).max);
  }
  m.profiles.resize(req.pointwise_orders.size());
  for (std::size_t o = 0; o < req.pointwise_orders.size(); ++o) {
    for (std::size_t s = 0; s < red.n_snapshots; ++s) {
      MomentProfile p{m.times[s], req.pointwise_orders[o], -cfg.x_max, dx, {}, {}};
      for (std::size_t i = 0; i < nx; ++i) {
        const auto& st = red.at(s, kFixed + o * nx + i);
        p.mean.push_back(st.mean);
        p.stderrs.push_back(st.stderr_mean());
      }
      m.profiles[o].push_back(std::move(p));
    }
  }
  return m;
}

struct LyapunovFit {
  double rate = 0.0;
  double intercept = 0.0;
  double se = 0.0;
  double residual = 0.0;  // max |ln estimate - fit|
  std::size_t n_points = 0;
};

/// Least-squares slope of ln(estimate) against t over [t_lo, t_hi]. The
/// stderr propagates the per-time stderrs through the (linear) slope
/// estimator, treating times as independent.
inline LyapunovFit fit_lyapunov(std::span<const double> times, std::span<const double> estimates,
                                std::span<const double> stderrs, double t_lo, double t_hi) {
  std::vector<double> t, y, sy;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_lo - 1e-9 || times[i] > t_hi + 1e-9) continue;
    if (!(estimates[i] > 0.0))
      throw std::invalid_argument("fit_lyapunov: nonpositive estimate at t = " +
                                  std::to_string(times[i]));
    t.push_back(times[i]);
    y.push_back(std::log(estimates[i]));
    sy.push_back(stderrs.empty() ? 0.0 : stderrs[i] / estimates[i]);
  }
  if (t.size() < 5) throw std::invalid_argument("fit_lyapunov: need >= 5 points in the window");
  const double n = static_cast<double>(t.size());
  const double tm = std::accumulate(t.begin(), t.end(), 0.0) / n;
  const double ym = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (y[i] - ym);
  }
  LyapunovFit f;
  f.rate = sxy / sxx;
  f.intercept = ym - f.rate * tm;
  f.n_points = t.size();
  double var = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double w = (t[i] - tm) / sxx;
    var += w * w * sy[i] * sy[i];
    f.residual = std::max(f.residual, std::abs(y[i] - f.intercept - f.rate * t[i]));
  }
  f.se = std::sqrt(var);
  return f;
}

inline LyapunovFit fit_lyapunov(const MomentSeries& s, double t_lo, double t_hi) {
  return fit_lyapunov(s.times, s.estimates, s.stderrs, t_lo, t_hi);
}

struct DecayFit {
  double slope = 0.0;       // d ln f / d(x^2)
  double intercept = 0.0;
  double comparison = 0.0;  // -1/(4 kappa t)
  std::size_t usable = 0;
  bool negative = false;
};

inline constexpr double kDecayFloor = 1e-13;

/// Affine fit of ln(values) against x^2 on the ring r1 <= |x| <= r2. Points
/// that are nonpositive or below kDecayFloor times the profile maximum are
/// treated as unresolved and skipped.
inline DecayFit spatial_decay_fit(std::span<const double> values, double x_min, double dx,
                                  double t, double kappa, double r1, double r2) {
  if (!(t > 0.0) || !(kappa > 0.0)) throw std::invalid_argument("spatial_decay_fit: t, kappa > 0");
  const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
  std::vector<double> X, Y;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = x_min + static_cast<double>(i) * dx;
    if (std::abs(x) < r1 || std::abs(x) > r2) continue;
    if (!(values[i] > kDecayFloor * peak) || !(values[i] > 0.0)) continue;
    X.push_back(x * x);
    Y.push_back(std::log(values[i]));
  }
  if (X.size() < 8)
    throw std::invalid_argument("spatial_decay_fit: fewer than 8 usable points (" +
                                std::to_string(X.size()) + ")");
  const double n = static_cast<double>(X.size());
  const double xm = std::accumulate(X.begin(), X.end(), 0.0) / n;
  const double ym = std::accumulate(Y.begin(), Y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    sxx += (X[i] - xm) * (X[i] - xm);
    sxy += (X[i] - xm) * (Y[i] - ym);
  }
  DecayFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = ym - f.slope * xm;
  f.comparison = -1.0 / (4.0 * kappa * t);
  f.usable = X.size();
  f.negative = f.slope < 0.0;
  return f;
}

/// Smallest grid radius r = |x_i| such that the mass of cells with |x| <= r
/// reaches q times the total.
inline double effective_support_radius(std::span<const double> values, double x_min, double dx,
                                       double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("effective_support_radius: q in (0,1)");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto radius = [&](std::size_t i) { return std::abs(x_min + static_cast<double>(i) * dx); };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return radius(a) < radius(b); });
  double total = 0.0;
  for (double v : values) total += std::max(v, 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("effective_support_radius: zero total mass");
  double acc = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    acc += std::max(values[order[j]], 0.0);
    // Cells at the same radius enter together.
    if (j + 1 < order.size() && radius(order[j + 1]) == radius(order[j])) continue;
    if (acc >= q * total) return radius(order[j]);
  }
  return radius(order.back());
}

/// t^{-1} ln int_{|x| > m t} f_t(x) dx for each field, with grid cells at
/// |x| >= m t counted in the tail (so m = 0 gives the total mass). Negative
/// entries of f (roundoff) count as zero; an empty tail gives -infinity.
inline std::vector<double> tail_mass_rate(const std::vector<MomentField>& fields, double m) {
  std::vector<double> out;
  for (const auto& f : fields) {
    if (!(f.t > 0.0)) throw std::invalid_argument("tail_mass_rate: needs t > 0");
    const double x_max = -f.x_min;
    if (m * f.t >= x_max)
      throw TruncationError("tail_mass_rate: m t = " + format_double(m * f.t) +
                            " reaches x_max = " + format_double(x_max));
    double tail = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i)
      if (std::abs(f.x(i)) >= m * f.t) tail += std::max(f.values[i], 0.0);
    tail *= f.dx;
    out.push_back(tail > 0.0 ? std::log(tail) / f.t : -std::numeric_limits<double>::infinity());
  }
  return out;
}

struct SupportProfile {
  double q = 0.99;
  std::vector<double> times;
  std::vector<double> radii;
  double m_hat = 0.0;
  double intercept = 0.0;
  double residual = 0.0;        // max |r - fit|
  double residual_fraction = 0.0;  // residual / (max r - min r)
  std::vector<double> tail_rates;  // at m = m_hat
  std::optional<double> b_estimate;
};

/// r_q(t) of each field with t in [t_lo, t_hi] and its least-squares line.
inline SupportProfile support_profile(const std::vector<MomentField>& fields, double q, double t_lo,
                                      double t_hi) {
  SupportProfile s;
  s.q = q;
  std::vector<MomentField> used;
  for (const auto& f : fields) {
    if (f.t < t_lo - 1e-9 || f.t > t_hi + 1e-9) continue;
    s.times.push_back(f.t);
    s.radii.push_back(effective_support_radius(f.values, f.x_min, f.dx, q));
    used.push_back(f);
  }
  if (s.times.size() < 3) throw std::invalid_argument("support_profile: need >= 3 times");
  const double n = static_cast<double>(s.times.size());
  const double tm = std::accumulate(s.times.begin(), s.times.end(), 0.0) / n;
  const double rm = std::accumulate(s.radii.begin(), s.radii.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    sxx += (s.times[i] - tm) * (s.times[i] - tm);
    sxy += (s.times[i] - tm) * (s.radii[i] - rm);
  }
  s.m_hat = sxy / sxx;
  s.intercept = rm - s.m_hat * tm;
  for (std::size_t i = 0; i < s.times.size(); ++i)
    s.residual = std::max(s.residual, std::abs(s.radii[i] - s.intercept - s.m_hat * s.times[i]));
  const auto [lo, hi] = std::minmax_element(s.radii.begin(), s.radii.end());
  s.residual_fraction = *hi > *lo ? s.residual / (*hi - *lo) : std::numeric_limits<double>::infinity();
  if (s.m_hat > 0.0) {
    bool fits = true;
    for (const auto& f : used) fits = fits && s.m_hat * f.t < -f.x_min;
    if (fits) s.tail_rates = tail_mass_rate(used, s.m_hat);
  }
  return s;
}

/// t^{-1} ln int_{|x| <= m t} f_t(x) dx (part (a) of effective support), over
/// the cells not counted by tail_mass_rate.
inline std::vector<double> inner_mass_rate(const std::vector<MomentField>& fields, double m) {
  std::vector<double> out;
  for (const auto& f : fields) {
    double inner = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i)
      if (std::abs(f.x(i)) < m * f.t) inner += std::max(f.values[i], 0.0);
    inner *= f.dx;
    out.push_back(inner > 0.0 ? std::log(inner) / f.t : -std::numeric_limits<double>::infinity());
  }
  return out;
}

/// b in sup_x E|u_t(x)|^4 <= b e^{b t / 4}, from the growth rate of the
/// fourth-moment peak: b = 4 * rate. Reported only.
inline double b_estimate(std::span<const double> times, std::span<const double> sup_fourth,
                         double t_lo, double t_hi) {
  return 4.0 * fit_lyapunov(times, sup_fourth, {}, t_lo, t_hi).rate;
}

struct HolderReport {
  double t = 0.0;
  std::vector<double> lags;
  std::vector<double> mean_sq_increments;
  double slope = 0.0;
  double intercept = 0.0;
  bool smallest_lag_excluded = false;
  double region_radius = 0.0;
  bool too_rough = false;  // slope < 0.25
  bool smooth = false;     // slope > 1.5
};

namespace detail {

inline std::pair<double, double> loglog_fit(std::span<const double> h, std::span<const double> v) {
  const double n = static_cast<double>(h.size());
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    xm += std::log(h[i]);
    ym += std::log(v[i]);
  }
  xm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = std::log(h[i]) - xm;
    sxx += x * x;
    sxy += x * (std::log(v[i]) - ym);
  }
  const double slope = sxy / sxx;
  return {slope, ym - slope * xm};
}

}  // namespace detail

inline std::vector<std::size_t> default_holder_lags() { return {2, 4, 8, 16, 32}; }

/// Mean-square spatial increments E|u_t(x+h) - u_t(x)|^2 averaged over the
/// replicates in `snapshots` and over x with |x|, |x+h| <= r_0.9 of the mean
/// square profile, for h = lag * dx. Log-log slope 1 means Hoelder 1/2. The
/// smallest lag is dropped when it deviates from the power law through the
/// remaining lags by more than 10% (lag-1 outlier test).
inline HolderReport holder_increment_exponent(const std::vector<Field>& snapshots,
                                              std::span<const std::size_t> lag_cells) {
  if (lag_cells.size() < 3) throw std::invalid_argument("holder: need at least 3 lags");
  if (snapshots.empty()) throw std::invalid_argument("holder: no snapshots");
  for (std::size_t i = 1; i < lag_cells.size(); ++i)
    if (lag_cells[i] <= lag_cells[i - 1])
      throw std::invalid_argument("holder: lags must be strictly increasing");
  const std::size_t nx = snapshots.front().values.size();
  const double dx = snapshots.front().dx, x_min = snapshots.front().x_min;

  std::vector<double> sq(nx, 0.0);
  for (const auto& f : snapshots)
    for (std::size_t i = 0; i < nx; ++i) sq[i] += f.values[i] * f.values[i];
  HolderReport rep;
  rep.t = snapshots.front().t;
  const bool has_mass = std::any_of(sq.begin(), sq.end(), [](double v) { return v > 0.0; });
  rep.region_radius = has_mass ? effective_support_radius(sq, x_min, dx, 0.9)
                               : std::abs(x_min);

  for (std::size_t lag : lag_cells) {
    if (lag == 0 || lag >= nx) throw std::invalid_argument("holder: lag out of range");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : snapshots) {
      for (std::size_t i = 0; i + lag < nx; ++i) {
        const double a = x_min + static_cast<double>(i) * dx;
        const double b = a + static_cast<double>(lag) * dx;
        if (std::abs(a) > rep.region_radius + 1e-12 || std::abs(b) > rep.region_radius + 1e-12)
          continue;
        const double d = f.values[i + lag] - f.values[i];
        sum += d * d;
        ++count;
      }
    }
    if (count == 0) throw std::invalid_argument("holder: lag wider than the support region");
    rep.lags.push_back(static_cast<double>(lag) * dx);
    rep.mean_sq_increments.push_back(sum / static_cast<double>(count));
  }
  for (double v : rep.mean_sq_increments)
    if (!(v > 0.0)) throw std::invalid_argument("holder: zero increments (constant field)");

  std::span<const double> h(rep.lags), v(rep.mean_sq_increments);
  auto [slope, icpt] = detail::loglog_fit(h, v);
  if (rep.lags.size() >= 4) {
    const auto [s_rest, i_rest] = detail::loglog_fit(h.subspan(1), v.subspan(1));
    const double predicted = i_rest + s_rest * std::log(h[0]);
    if (std::abs(std::log(v[0]) - predicted) > std::log(1.1)) {
      rep.smallest_lag_excluded = true;
      slope = s_rest;
      icpt = i_rest;
    }
  }
  rep.slope = slope;
  rep.intercept = icpt;
  rep.too_rough = slope < 0.25;
  rep.smooth = slope > 1.5;
  return rep;
}

/// Collects the snapshot at cfg.t_end of replicates 0..n_reps-1.
inline std::vector<Field> collect_final_snapshots(SimConfig cfg, std::size_t n_reps,
                                                  unsigned threads = 1) {
  cfg.snapshot_times = {cfg.t_end};
  const PathRunner runner(cfg);
  std::vector<Field> out(n_reps);
  parallel_for(n_reps, threads, [&](std::size_t rep) {
    runner.run(rep, [&](std::size_t, double t, std::span<const double> u) {
      out[rep] = Field{t, {u.begin(), u.end()}, cfg.dx(), -cfg.x_max};
    });
  });
  return out;
}

/// (sup_x (p_t * u0)(x))^2 for symmetric unimodal u0: the peak sits at x = 0.
inline double deterministic_peak_sq(const InitialData& u0, double t, double kappa) {
  using boost::math::quadrature::gauss_kronrod;
  double peak;
  if (u0.kind == InitKind::discrete_delta) {
    peak = u0.height * heat_kernel(t, 0.0, kappa);
  } else {
    peak = 2.0 * gauss_kronrod<double, 61>::integrate(
                     [&](double y) { return heat_kernel(t, y, kappa) * u0(y); }, 0.0, u0.K, 10,
                     1e-14);
  }
  return peak * peak;
}

struct PeakRatio {
  double t = 0.0;
  double ratio = 0.0;
  double se = 0.0;
  double numerator = 0.0;    // E sup_x |u_t|^2
  double denominator = 0.0;  // (sup_x (p_t * u0)(x))^2
};

/// E sup_x |u_t|^2 / (sup_x (p_t * u0)(x))^2 at each snapshot time of cfg.
inline std::vector<PeakRatio> peak_concentration_ratio(const SimConfig& cfg, std::size_t n_reps,
                                                       unsigned threads = 1,
                                                       McMoments* moments_out = nullptr) {
  MomentRequest req;
  req.l2_sq = false;
  auto m = mc_moments(cfg, n_reps, req, threads);
  std::vector<PeakRatio> out;
  for (std::size_t s = 0; s < m.times.size(); ++s) {
    const double t = m.times[s];
    if (!(t > 0.0)) continue;
    PeakRatio p;
    p.t = t;
    p.numerator = m.sup_sq->estimates[s];
    p.denominator = deterministic_peak_sq(cfg.init, t, cfg.kappa);
    p.ratio = p.numerator / p.denominator;
    p.se = m.sup_sq->stderrs[s] / p.denominator;
    out.push_back(p);
  }
  if (moments_out) *moments_out = std::move(m);
  return out;
}

struct RvPoint {
  double t = 0.0;
  double integral_log = 0.0;  // ln int_e^inf exp(-q (ln x)^{eta+1} / t) dx
  double ratio = 0.0;         // integral / (t^{1/eta} exp((t/q)^{1/eta}))
  double rel_error = 0.0;     // quadrature error estimate, relative
};

/// ln int_e^inf exp(-q (ln x)^{eta+1} / t) dx via z = ln x, i.e.
/// ln int_1^inf exp(z - q z^{eta+1} / t) dz, integrated around the maximum of
/// the exponent with the peak value factored out.
inline RvPoint rv_integral_point(double q, double eta, double t) {
  using boost::math::quadrature::gauss_kronrod;
  if (!(q > 0.0) || !(eta > 0.0) || !(t > 0.0))
    throw std::invalid_argument("rv_integral_check: q, eta, t must be > 0");
  auto phi = [&](double z) { return z - q * std::pow(z, eta + 1.0) / t; };
  const double z_star = std::max(1.0, std::pow(t / (q * (eta + 1.0)), 1.0 / eta));
  const double top = phi(z_star);
  // Upper cut where the exponent has fallen 80 below its maximum.
  double z_hi = 2.0 * z_star + 1.0;
  while (phi(z_hi) > top - 80.0) z_hi = 2.0 * z_hi;
  double total = 0.0, err_total = 0.0;
  const double pieces[] = {1.0, z_star, z_hi};
  for (int p = 0; p < 2; ++p) {
    if (pieces[p + 1] <= pieces[p]) continue;
    double err = 0.0;
    total += gauss_kronrod<double, 61>::integrate(
        [&](double z) { return std::exp(phi(z) - top); }, pieces[p], pieces[p + 1], 20, 1e-12,
        &err);
    err_total += err;
  }
  RvPoint r;
  r.t = t;
  r.integral_log = top + std::log(total);
  r.rel_error = total > 0.0 ? err_total / total : 1.0;
  if (!(r.rel_error <= 1e-8))
    throw NumericalError("rv_integral_check: quadrature did not reach 1e-8 relative at t = " +
                         format_double(t));
  const double log_ref = std::log(t) / eta + std::pow(t / q, 1.0 / eta);
  r.ratio = std::exp(r.integral_log - log_ref);
  return r;
}

inline std::vector<RvPoint> rv_integral_check(double q, double eta, std::span<const double> ts) {
  std::vector<RvPoint> out;
  for (double t : ts) out.push_back(rv_integral_point(q, eta, t));
  return out;
}

struct ConvexityCheck {
  std::vector<int> orders;
  std::vector<double> log_moments;
  std::vector<double> second_differences;
  std::vector<double> stderrs;  // jackknife stderr of each second difference
  bool convex = false;          // every second difference >= -2 stderr
};

/// ln of the empirical p-th absolute moments at consecutive orders and their
/// second differences, with leave-one-out jackknife errors.
inline ConvexityCheck log_moment_convexity(std::span<const double> samples,
                                           std::span<const int> orders) {
  const std::size_t n = samples.size();
  if (n < 2 || orders.size() < 3) throw std::invalid_argument("convexity: need n >= 2, >= 3 orders");
  std::vector<double> sums(orders.size(), 0.0);
  for (std::size_t o = 0; o < orders.size(); ++o) {
    std::vector<double> powers(n);
    for (std::size_t i = 0; i < n; ++i) powers[i] = std::pow(std::abs(samples[i]), orders[o]);
    sums[o] = pairwise_sum(powers.begin(), powers.end());
  }
  const double N = static_cast<double>(n);
  ConvexityCheck c;
  c.orders.assign(orders.begin(), orders.end());
  for (double s : sums) c.log_moments.push_back(std::log(s / N));
  c.convex = true;
  for (std::size_t o = 1; o + 1 < orders.size(); ++o) {
    auto second = [&](double a, double b, double d) { return a - 2.0 * b + d; };
    const double value = second(c.log_moments[o - 1], c.log_moments[o], c.log_moments[o + 1]);
    const double se = jackknife_stderr(n, [&](std::size_t i) {
      auto loo = [&](std::size_t k) {
        return std::log((sums[k] - std::pow(std::abs(samples[i]), orders[k])) / (N - 1.0));
      };
      return second(loo(o - 1), loo(o), loo(o + 1));
    });
    c.second_differences.push_back(value);
    c.stderrs.push_back(se);
    c.convex = c.convex && value >= -2.0 * se;
  }
  return c;
}

}  // namespace shelab

#endif  // SHELAB_ESTIMATORS_HPP
