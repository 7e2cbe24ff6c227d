#include "stft_internal.hpp"

#include "resin/audio.hpp"
#include "resin/errors.hpp"
#include "resin/fft.hpp"

#include <algorithm>

namespace resin::detail {

std::size_t reflect_index(std::ptrdiff_t pos, std::size_t len) {
    if (len == 1) return 0;
    const std::ptrdiff_t period = 2 * (static_cast<std::ptrdiff_t>(len) - 1);
    std::ptrdiff_t p = pos % period;
    if (p < 0) p += period;
    if (p >= static_cast<std::ptrdiff_t>(len)) p = period - p;
    return static_cast<std::size_t>(p);
}

StftFrames stft_complex(const std::vector<double>& x, std::size_t fft_size,
                        std::size_t hop, std::size_t win) {
    if (x.empty()) raise(ErrorCode::EmptySignal, "stft of empty signal");
    if (!is_power_of_two(fft_size)) raise(ErrorCode::InvalidRange, "fft_size must be a power of two");
    if (hop < 1) raise(ErrorCode::InvalidRange, "hop must be >= 1");
    if (win > fft_size || win < 1) raise(ErrorCode::InvalidRange, "window must satisfy 1 <= win <= fft_size");

    StftFrames fw;
    fw.fft_size = fft_size;
    fw.hop = hop;
    fw.win = win;
    fw.win_off = (fft_size - win) / 2;
    fw.signal_len = x.size();
    fw.frames = stft_frame_count(x.size(), hop);
    fw.bins = fft_size / 2 + 1;
    fw.window = hann_window(win);
    fw.re.resize(fw.frames * fw.bins);
    fw.im.resize(fw.frames * fw.bins);

    const std::size_t pad = fft_size / 2;
    std::vector<double> frame(fft_size);
    std::vector<double> re, im;
    for (std::size_t f = 0; f < fw.frames; ++f) {
        std::fill(frame.begin(), frame.end(), 0.0);
        for (std::size_t i = 0; i < win; ++i) {
            const std::ptrdiff_t pos =
                static_cast<std::ptrdiff_t>(f * hop + fw.win_off + i) - static_cast<std::ptrdiff_t>(pad);
            frame[fw.win_off + i] = fw.window[i] * x[reflect_index(pos, x.size())];
        }
        real_dft_onesided(frame.data(), fft_size, re, im);
        std::copy(re.begin(), re.end(), fw.re.begin() + static_cast<std::ptrdiff_t>(f * fw.bins));
        std::copy(im.begin(), im.end(), fw.im.begin() + static_cast<std::ptrdiff_t>(f * fw.bins));
    }
    return fw;
}

void stft_complex_adjoint(const StftFrames& fw, const std::vector<double>& gre,
                          const std::vector<double>& gim, std::vector<double>& grad) {
    const std::size_t pad = fw.fft_size / 2;
    std::vector<double> gframe(fw.fft_size);
    std::vector<double> bre(fw.bins), bim(fw.bins);
    for (std::size_t f = 0; f < fw.frames; ++f) {
        std::copy(gre.begin() + static_cast<std::ptrdiff_t>(f * fw.bins),
                  gre.begin() + static_cast<std::ptrdiff_t>((f + 1) * fw.bins), bre.begin());
        std::copy(gim.begin() + static_cast<std::ptrdiff_t>(f * fw.bins),
                  gim.begin() + static_cast<std::ptrdiff_t>((f + 1) * fw.bins), bim.begin());
        std::fill(gframe.begin(), gframe.end(), 0.0);
        real_dft_onesided_adjoint(bre, bim, fw.fft_size, gframe.data());
        for (std::size_t i = 0; i < fw.win; ++i) {
            const std::ptrdiff_t pos =
                static_cast<std::ptrdiff_t>(f * fw.hop + fw.win_off + i) - static_cast<std::ptrdiff_t>(pad);
            grad[reflect_index(pos, fw.signal_len)] += fw.window[i] * gframe[fw.win_off + i];
        }
    }
}

} // namespace resin::detail
