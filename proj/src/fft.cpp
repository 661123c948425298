#include "drau/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "drau/errors.hpp"

namespace drau::fft {

namespace {

// Plain complex product; avoids the NaN-recovery path of operator*.
inline std::complex<double> cmul(std::complex<double> x, std::complex<double> y) {
  return {x.real() * y.real() - x.imag() * y.imag(), x.real() * y.imag() + x.imag() * y.real()};
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void transform(std::span<std::complex<double>> a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw DimensionError("fft length " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddles e^{-2 pi i k / n} for k < n/2, evaluated directly (not by
  // repeated multiplication) and cached per length.
  thread_local std::vector<std::complex<double>> twiddles;
  thread_local std::size_t twiddle_n = 0;
  if (twiddle_n != n) {
    twiddles.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      twiddles[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
    twiddle_n = n;
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto& t = twiddles[k * step];
        const std::complex<double> w = inverse ? std::conj(t) : t;
        const auto u = a[start + k];
        const auto v = cmul(a[start + k + half], w);
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

std::vector<std::complex<double>> forward_real(std::span<const double> values) {
  std::vector<std::complex<double>> out(values.begin(), values.end());
  transform(out, false);
  return out;
}

std::vector<double> inverse_real(std::span<const std::complex<double>> spectrum) {
  std::vector<std::complex<double>> tmp(spectrum.begin(), spectrum.end());
  transform(tmp, true);
  std::vector<double> out(tmp.size());
  for (std::size_t i = 0; i < tmp.size(); ++i) out[i] = tmp[i].real();
  return out;
}

std::vector<double> circular_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("circular_convolve: length mismatch");
  auto fa = forward_real(a);
  const auto fb = forward_real(b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = cmul(fa[i], fb[i]);
  return inverse_real(fa);
}

std::vector<double> circular_correlate(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("circular_correlate: length mismatch");
  auto fa = forward_real(a);
  const auto fb = forward_real(b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = cmul(fa[i], std::conj(fb[i]));
  return inverse_real(fa);
}

}  // namespace drau::fft
