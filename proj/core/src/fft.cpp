#include "resin/fft.hpp"

#include <cmath>

namespace resin {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace {

// Twiddle tables are cached per size; FFT sizes in use are a handful of
// small powers of two.
struct Twiddles {
    std::vector<double> cos_fwd;
    std::vector<double> sin_fwd;
};

const Twiddles& twiddles_for(std::size_t n) {
    thread_local std::vector<std::pair<std::size_t, Twiddles>> cache;
    for (const auto& entry : cache) {
        if (entry.first == n) return entry.second;
    }
    Twiddles tw;
    tw.cos_fwd.resize(n / 2);
    tw.sin_fwd.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
        tw.cos_fwd[k] = std::cos(angle);
        tw.sin_fwd[k] = std::sin(angle);
    }
    cache.emplace_back(n, std::move(tw));
    return cache.back().second;
}

} // namespace

void fft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    const std::size_t n = re.size();
    if (n <= 1) return;

    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }

    const Twiddles& tw = twiddles_for(n);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        const std::size_t half = len / 2;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const double wr = tw.cos_fwd[k * stride];
                const double wi = inverse ? -tw.sin_fwd[k * stride] : tw.sin_fwd[k * stride];
                const std::size_t a = start + k;
                const std::size_t b = a + half;
                const double tr = re[b] * wr - im[b] * wi;
                const double ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
    }
}

void real_dft_onesided(const double* frame, std::size_t n,
                       std::vector<double>& re, std::vector<double>& im) {
    std::vector<double> wre(frame, frame + n);
    std::vector<double> wim(n, 0.0);
    fft_inplace(wre, wim, /*inverse=*/false);
    const std::size_t bins = n / 2 + 1;
    re.assign(wre.begin(), wre.begin() + static_cast<std::ptrdiff_t>(bins));
    im.assign(wim.begin(), wim.begin() + static_cast<std::ptrdiff_t>(bins));
}

void real_dft_onesided_adjoint(const std::vector<double>& gre,
                               const std::vector<double>& gim,
                               std::size_t n, double* grad) {
    // grad[t] += Re( sum_{k<=n/2} (gre_k + i gim_k) e^{+i 2 pi k t / n} ),
    // computed as an unnormalized inverse FFT of the zero-extended spectrum.
    std::vector<double> wre(n, 0.0);
    std::vector<double> wim(n, 0.0);
    const std::size_t bins = n / 2 + 1;
    for (std::size_t k = 0; k < bins; ++k) {
        wre[k] = gre[k];
        wim[k] = gim[k];
    }
    fft_inplace(wre, wim, /*inverse=*/true);
    for (std::size_t t = 0; t < n; ++t) grad[t] += wre[t];
}

} // namespace resin
