#pragma once

#include <cstddef>
#include <vector>

// Complex STFT machinery shared by the public magnitude STFT and the
// spectral-loss backward pass. Framing follows the public contract:
// reflect padding of fft_size/2 per side, periodic Hann window of length
// win centered in the frame, frame f starting at f*hop in padded space.

namespace resin::detail {

std::size_t reflect_index(std::ptrdiff_t pos, std::size_t len);

struct StftFrames {
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::size_t fft_size = 0;
    std::size_t hop = 0;
    std::size_t win = 0;
    std::size_t win_off = 0;
    std::size_t signal_len = 0;
    std::vector<double> re;     // frames * bins
    std::vector<double> im;     // frames * bins
    std::vector<double> window; // win
};

StftFrames stft_complex(const std::vector<double>& x, std::size_t fft_size,
                        std::size_t hop, std::size_t win);

// Accumulates d(signal) from per-bin cotangents (gre, gim), both
// frames * bins. grad must already be sized to the signal length.
void stft_complex_adjoint(const StftFrames& fw, const std::vector<double>& gre,
                          const std::vector<double>& gim, std::vector<double>& grad);

} // namespace resin::detail
