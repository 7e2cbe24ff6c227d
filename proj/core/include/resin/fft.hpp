#pragma once

#include <cstddef>
#include <vector>

namespace resin {

// Iterative radix-2 complex FFT over interleaved (re, im) pairs, in place.
// n must be a power of two. No normalization on either direction.
void fft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse);

// One-sided DFT of a real frame of length n (power of two): fills
// re/im with bins 0..n/2 using the e^{-i 2 pi k t / n} convention.
void real_dft_onesided(const double* frame, std::size_t n,
                       std::vector<double>& re, std::vector<double>& im);

// Adjoint of real_dft_onesided: given cotangents (gre, gim) for the
// one-sided bins, accumulates d/d(frame) into grad (length n).
// grad[t] += sum_k gre[k] cos(2 pi k t / n) - gim[k] sin(2 pi k t / n).
void real_dft_onesided_adjoint(const std::vector<double>& gre,
                               const std::vector<double>& gim,
                               std::size_t n, double* grad);

bool is_power_of_two(std::size_t n);

} // namespace resin
