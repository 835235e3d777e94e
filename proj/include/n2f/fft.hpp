#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "n2f/common.hpp"

namespace n2f {

inline int64_t next_pow2(int64_t n) {
    int64_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 Cooley-Tukey, length must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// One-sided magnitude spectrum of a burst. The signal is zero-padded to the
// next power of two P; the returned vector has P/2 + 1 bins. Interior bins are
// scaled by 2/L, the DC and Nyquist bins by 1/L, so a pure cosine of amplitude
// A at an exact bin reads back as A when L is already a power of two.
template <typename T>
std::vector<T> fft_magnitude(const T* samples, int64_t len) {
    N2F_CHECK(len >= 2, "fft_magnitude needs at least 2 samples, got %lld",
              static_cast<long long>(len));
    const int64_t p = next_pow2(len);
    std::vector<std::complex<double>> buf(static_cast<size_t>(p), {0.0, 0.0});
    for (int64_t i = 0; i < len; ++i) buf[static_cast<size_t>(i)] = {static_cast<double>(samples[i]), 0.0};
    fft_radix2(buf);
    const int64_t m = p / 2 + 1;
    std::vector<T> mag(static_cast<size_t>(m));
    const double inv_l = 1.0 / static_cast<double>(len);
    for (int64_t k = 0; k < m; ++k) {
        const double scale = (k == 0 || k == p / 2) ? inv_l : 2.0 * inv_l;
        mag[static_cast<size_t>(k)] = static_cast<T>(std::abs(buf[static_cast<size_t>(k)]) * scale);
    }
    return mag;
}

template <typename T>
std::vector<T> fft_magnitude(const std::vector<T>& samples) {
    return fft_magnitude(samples.data(), static_cast<int64_t>(samples.size()));
}

}  // namespace n2f
