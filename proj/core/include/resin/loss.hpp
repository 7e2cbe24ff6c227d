#pragma once

#include "resin/audio.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace resin {

struct StftResolution {
    std::size_t fft_size = 0;
    std::size_t hop = 0;
    std::size_t win = 0; // 0 means fft_size

    bool operator==(const StftResolution&) const = default;
};

// Mel projection applied to magnitudes before both loss terms.
// f_max == 0 means sample_rate / 2.
struct MelSettings {
    std::size_t mel_bins = 128;
    double f_min = 0.0;
    double f_max = 0.0;

    bool operator==(const MelSettings&) const = default;
};

struct LossConfig {
    double lambda_sl1 = 1.0;
    double lambda_stft = 1.0;
    double beta = 0.1;
    std::vector<StftResolution> resolutions;
    std::optional<MelSettings> mel;
    double log_epsilon = 1e-7;
};

struct LossParts {
    double sl1 = 0.0;
    double stft = 0.0;
};

// Mean over samples of {0.5 d^2 / beta if |d| < beta else |d| - 0.5 beta},
// d = x - xhat. Quadratic near zero, linear in the tails, continuous at beta.
double smooth_l1(const AudioBuffer& x, const AudioBuffer& xhat, double beta);

// Spectral convergence plus log-magnitude distance at one resolution:
// ||M(x)-M(xhat)||_F / ||M(x)||_F + mean |log(M(x)+eps) - log(M(xhat)+eps)|
// where M is the (optionally mel-projected) magnitude spectrogram.
double stft_loss_single(const AudioBuffer& x, const AudioBuffer& xhat,
                        const StftResolution& res, const std::optional<MelSettings>& mel,
                        double log_epsilon = 1e-7);

// Mean of stft_loss_single over config.resolutions.
double multires_stft_loss(const AudioBuffer& x, const AudioBuffer& xhat,
                          const LossConfig& config);

// lambda_sl1 * smooth_l1 + lambda_stft * multires_stft_loss; a zero lambda
// skips that term entirely.
std::pair<double, LossParts> total_loss(const AudioBuffer& x, const AudioBuffer& xhat,
                                        const LossConfig& config);

// Same value, plus d(total)/d(xhat samples) written to grad (overwritten).
std::pair<double, LossParts> total_loss_with_grad(const AudioBuffer& x,
                                                  const AudioBuffer& xhat,
                                                  const LossConfig& config,
                                                  std::vector<double>& grad);

// Named training objectives: l1_melstft (mel 128, FFT [512,1024,2048]),
// l1_stft and stft_only (no mel, FFT [128..2048]), melstft_only; the *_only
// variants drop the time-domain term. Hops are fft_size / 8.
LossConfig loss_preset(const std::string& name);

} // namespace resin
