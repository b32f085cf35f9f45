#ifndef SHELAB_FFT_HPP
#define SHELAB_FFT_HPP

// Thin RAII layer over FFTW real<->complex transforms. Plans are created once
// per size (under a lock) with FFTW_UNALIGNED and executed through the
// new-array interface, which FFTW documents as thread-safe.

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace shelab::fft {

using cplx = std::complex<double>;

namespace detail {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  ~PlanPair() {
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline const PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<PlanPair>> cache;
  std::lock_guard lock(planner_mutex());
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<PlanPair>();
    std::vector<double> r(n);
    std::vector<cplx> c(n / 2 + 1);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    slot->forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), r.data(),
                                         reinterpret_cast<fftw_complex*>(c.data()), flags);
    slot->backward = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                          reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                                          flags | FFTW_DESTROY_INPUT);
  }
  return *slot;
}

}  // namespace detail

inline std::size_t n_modes(std::size_t n) { return n / 2 + 1; }

/// Unnormalized forward transform: out[k] = sum_j in[j] exp(-2 pi i jk/n).
inline void forward(std::span<const double> in, std::span<cplx> out) {
  const auto& p = detail::plans_for(in.size());
  std::vector<double> tmp(in.begin(), in.end());
  fftw_execute_dft_r2c(p.forward, tmp.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

/// Inverse transform including the 1/n normalization. `in` is consumed.
inline void backward(std::span<cplx> in, std::span<double> out) {
  const auto& p = detail::plans_for(out.size());
  fftw_execute_dft_c2r(p.backward, reinterpret_cast<fftw_complex*>(in.data()), out.data());
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
}

inline std::vector<cplx> forward(std::span<const double> in) {
  std::vector<cplx> out(n_modes(in.size()));
  forward(in, out);
  return out;
}

/// Angular wavenumber of mode k on a periodic domain of length L.
inline double wavenumber(std::size_t k, double length) {
  return 2.0 * 3.14159265358979323846 * static_cast<double>(k) / length;
}

}  // namespace shelab::fft

#endif  // SHELAB_FFT_HPP
