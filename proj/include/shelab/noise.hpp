#ifndef SHELAB_NOISE_HPP
#define SHELAB_NOISE_HPP

// Counter-based space-time white noise. Every Gaussian is a pure function of
// (seed, replicate, step, cell): Philox4x32-10 keyed by the seed, counter
// (cell pair, step, replicate), converted to normals by Wichura's AS241
// inverse normal CDF. No generator state is shared between replicates.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace shelab {

inline constexpr std::string_view kRngFamily = "philox4x32-10+as241";
inline constexpr std::string_view kRngVersion = "1";

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kM0 = 0xD2511F53u;
inline constexpr std::uint32_t kM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kW1 = 0xBB67AE85u;

inline Counter round(Counter c, Key k) noexcept {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
  return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
          static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
}

/// Philox4x32 with 10 rounds.
inline Counter philox4x32_10(Counter c, Key k) noexcept {
  for (int r = 0; r < 10; ++r) {
    c = round(c, k);
    if (r < 9) {
      k[0] += kW0;
      k[1] += kW1;
    }
  }
  return c;
}

}  // namespace philox

namespace detail {

/// AS241 central region, |q| <= 0.425 with q = p - 1/2.
inline double quantile_central(double q) noexcept {
  const double r = 0.180625 - q * q;
  return q *
         (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
               67265.770927008700853) * r + 45921.953931549871457) * r +
             13731.693765509461125) * r + 1971.5909503065514427) * r +
           133.14166789178437745) * r + 3.387132872796366608) /
         (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
               39307.89580009271061) * r + 21213.794301586595867) * r +
             5394.1960214247511077) * r + 687.1870074920579083) * r +
           42.313330701600911252) * r + 1.0);
}

inline double quantile_tail(double p) noexcept {
  const double q = p - 0.5;
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
              0.24178072517745061177) * r + 1.27045825245236838258) * r +
            3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
              0.0151986665636164571966) * r + 0.14810397642748007459) * r +
            0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
              0.0012426609473880784386) * r + 0.026532189526576123093) * r +
            0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
              1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
            0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

}  // namespace detail

/// Inverse of the standard normal CDF (Wichura 1988, AS241 PPND16; relative
/// accuracy about 1e-16). Requires 0 < p < 1.
inline double normal_quantile(double p) noexcept {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) return detail::quantile_central(q);
  return detail::quantile_tail(p);
}

/// Uniform in the open interval (0, 1): (2k + 1) 2^-53 with k the top 52 bits
/// of two 32-bit words. Every value is exact, the largest is 1 - 2^-53.
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t k = (static_cast<std::uint64_t>(hi >> 6) << 26) | (lo >> 6);
  return static_cast<double>(2 * k + 1) * 0x1.0p-53;
}

/// Identity of one replicate's noise. Value type: each worker owns its own.
struct NoiseStream {
  std::uint64_t seed = 0;
  std::uint64_t replicate_index = 0;
  std::uint64_t step_counter = 0;
};

/// Fills `out` with i.i.d. N(0, variance) values for the stream's current
/// step, then advances the step counter. Cell pair j uses counter
/// {j, step, replicate_lo, replicate_hi}.
inline void fill_increments(NoiseStream& s, std::span<double> out, double variance) {
  if (s.step_counter > 0xFFFFFFFFull)
    throw std::overflow_error("fill_increments: step counter exceeds 2^32");
  const double scale = std::sqrt(variance);
  const philox::Key key{static_cast<std::uint32_t>(s.seed),
                        static_cast<std::uint32_t>(s.seed >> 32)};
  const auto step = static_cast<std::uint32_t>(s.step_counter);
  const auto rep_lo = static_cast<std::uint32_t>(s.replicate_index);
  const auto rep_hi = static_cast<std::uint32_t>(s.replicate_index >> 32);
  const std::size_t n = out.size(), pairs = (n + 1) / 2;

  // Three passes so the first two vectorize: uniforms, central branch for
  // every entry, then the tail branch where it applies.
  thread_local std::vector<double> uniforms;
  uniforms.resize(2 * pairs);
  for (std::size_t pair = 0; pair < pairs; ++pair) {
    const auto r = philox::philox4x32_10(
        {static_cast<std::uint32_t>(pair), step, rep_lo, rep_hi}, key);
    uniforms[2 * pair] = uniform_open(r[0], r[1]);
    uniforms[2 * pair + 1] = uniform_open(r[2], r[3]);
  }
  for (std::size_t i = 0; i < n; ++i)
    out[i] = scale * detail::quantile_central(uniforms[i] - 0.5);
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(uniforms[i] - 0.5) > 0.425) out[i] = scale * detail::quantile_tail(uniforms[i]);
  ++s.step_counter;
}

/// Cell-averaged white-noise increments: N(0, dt/dx) per cell.
inline std::vector<double> sample_increments(NoiseStream& s, std::size_t nx, double dt,
                                             double dx) {
  if (!(dt > 0.0) || !(dx > 0.0))
    throw std::invalid_argument("sample_increments: dt and dx must be > 0");
  std::vector<double> out(nx);
  fill_increments(s, out, dt / dx);
  return out;
}

}  // namespace shelab

#endif  // SHELAB_NOISE_HPP
