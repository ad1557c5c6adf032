#include "chanpred/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace chanpred::est {

namespace {

void transform(std::span<cd> a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft: length " + std::to_string(n) + " is not a power of two");
    }

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        // Twiddles are evaluated directly rather than by recurrence so the
        // round-off does not grow with the stage length.
        for (std::size_t k = 0; k < half; ++k) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                               static_cast<double>(len);
            const cd w{std::cos(ang), std::sin(ang)};
            for (std::size_t i = 0; i < n; i += len) {
                const cd u = a[i + k];
                const cd v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }

    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        for (auto& v : a) v *= scale;
    }
}

}  // namespace

void fft_inplace(std::span<cd> data) { transform(data, false); }
void ifft_inplace(std::span<cd> data) { transform(data, true); }

std::vector<cd> fft(std::span<const cd> x) {
    std::vector<cd> out(x.begin(), x.end());
    fft_inplace(out);
    return out;
}

std::vector<cd> ifft(std::span<const cd> x) {
    std::vector<cd> out(x.begin(), x.end());
    ifft_inplace(out);
    return out;
}

}  // namespace chanpred::est
