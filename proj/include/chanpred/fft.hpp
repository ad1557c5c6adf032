#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace chanpred::est {

using cd = std::complex<double>;

constexpr bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 transform. Forward is the unnormalized DFT
//   X[f] = sum_n x[n] exp(-2 pi i f n / N),
// inverse carries the 1/N factor so that ifft(fft(x)) == x.
// Both throw std::invalid_argument for lengths that are not a power of two.
void fft_inplace(std::span<cd> data);
void ifft_inplace(std::span<cd> data);

std::vector<cd> fft(std::span<const cd> x);
std::vector<cd> ifft(std::span<const cd> x);

}  // namespace chanpred::est
