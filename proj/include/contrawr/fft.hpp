#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace contrawr {

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -6.283185307179586 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// Forward DFT of a real frame; returns the one-sided spectrum of
// floor(n/2) + 1 bins. Radix-2 when the frame length allows, otherwise a
// direct O(n^2) transform (frames are short, so this stays cheap).
inline std::vector<std::complex<double>> real_dft_onesided(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  const std::size_t bins = n / 2 + 1;
  std::vector<std::complex<double>> out(bins);
  if (detail::is_power_of_two(n)) {
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = {frame[i], 0.0};
    detail::fft_radix2(a);
    for (std::size_t k = 0; k < bins; ++k) out[k] = a[k];
    return out;
  }
  const double step = -6.283185307179586 / static_cast<double>(n);
  for (std::size_t k = 0; k < bins; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double angle = step * static_cast<double>(k * t % n);
      re += frame[t] * std::cos(angle);
      im += frame[t] * std::sin(angle);
    }
    out[k] = {re, im};
  }
  return out;
}

}  // namespace contrawr
