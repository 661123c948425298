#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace drau::fft {

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// In-place iterative radix-2 transform; the length must be a power of two.
/// The inverse includes the 1/n factor.
void transform(std::span<std::complex<double>> values, bool inverse);

std::vector<std::complex<double>> forward_real(std::span<const double> values);
/// Real part of the inverse transform.
std::vector<double> inverse_real(std::span<const std::complex<double>> spectrum);

/// z[k] = sum_i a[i] b[(k - i) mod n]
std::vector<double> circular_convolve(std::span<const double> a, std::span<const double> b);
/// z[k] = sum_i a[i] b[(i - k) mod n], the adjoint of convolution with b.
std::vector<double> circular_correlate(std::span<const double> a, std::span<const double> b);

}  // namespace drau::fft
