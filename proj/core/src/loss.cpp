#include "resin/loss.hpp"

#include "resin/errors.hpp"
#include "stft_internal.hpp"

#include <algorithm>
#include <cmath>

namespace resin {

namespace {

// Compensated accumulation keeps the finite-difference noise floor of the
// gradient checks well below the comparison tolerance.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

void check_lengths(const AudioBuffer& x, const AudioBuffer& xhat) {
    if (x.samples.size() != xhat.samples.size()) {
        raise(ErrorCode::LengthMismatch, "signals differ in length");
    }
}

// Magnitude spectrogram (frames x bins), optionally mel-projected.
struct MagGrid {
    std::vector<double> mag; // loss-side magnitudes (raw or mel)
    std::size_t frames = 0;
    std::size_t bins = 0;
};

MagGrid project(const detail::StftFrames& fw, const MelFilterbank* bank) {
    MagGrid grid;
    grid.frames = fw.frames;
    std::vector<double> raw(fw.frames * fw.bins);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = std::sqrt(fw.re[i] * fw.re[i] + fw.im[i] * fw.im[i]);
    }
    if (bank == nullptr) {
        grid.bins = fw.bins;
        grid.mag = std::move(raw);
        return grid;
    }
    grid.bins = bank->mel_bins;
    grid.mag.assign(fw.frames * bank->mel_bins, 0.0);
    for (std::size_t f = 0; f < fw.frames; ++f) {
        const double* src = raw.data() + f * fw.bins;
        double* dst = grid.mag.data() + f * bank->mel_bins;
        for (std::size_t m = 0; m < bank->mel_bins; ++m) {
            const double* row = bank->weights.data() + m * bank->fft_bins;
            double sum = 0.0;
            for (std::size_t b = 0; b < fw.bins; ++b) sum += row[b] * src[b];
            dst[m] = sum;
        }
    }
    return grid;
}

// Loss at one resolution; when grad is non-null, scale * d(loss)/d(xhat)
// is accumulated into it.
double stft_term(const AudioBuffer& x, const AudioBuffer& xhat, const StftResolution& res,
                 const std::optional<MelSettings>& mel, double log_epsilon,
                 double scale, std::vector<double>* grad) {
    check_lengths(x, xhat);
    const std::size_t win = res.win == 0 ? res.fft_size : res.win;

    MelFilterbank bank;
    const MelFilterbank* bank_ptr = nullptr;
    if (mel.has_value()) {
        const double f_max = mel->f_max > 0.0 ? mel->f_max : x.sample_rate / 2.0;
        bank = build_mel_filterbank(mel->mel_bins, res.fft_size, x.sample_rate,
                                    mel->f_min, f_max);
        bank_ptr = &bank;
    }

    const detail::StftFrames fw_x = detail::stft_complex(x.samples, res.fft_size, res.hop, win);
    const detail::StftFrames fw_h = detail::stft_complex(xhat.samples, res.fft_size, res.hop, win);
    const MagGrid mx = project(fw_x, bank_ptr);
    const MagGrid mh = project(fw_h, bank_ptr);

    KahanSum norm_x_sq;
    KahanSum diff_sq;
    KahanSum mag_sum;
    const std::size_t count = mx.mag.size();
    for (std::size_t i = 0; i < count; ++i) {
        norm_x_sq.add(mx.mag[i] * mx.mag[i]);
        const double d = mx.mag[i] - mh.mag[i];
        diff_sq.add(d * d);
        mag_sum.add(std::abs(std::log(mx.mag[i] + log_epsilon) -
                             std::log(mh.mag[i] + log_epsilon)));
    }
    if (norm_x_sq.sum == 0.0) {
        raise(ErrorCode::SilentReference, "reference spectrogram is all zero");
    }
    const double norm_x = std::sqrt(norm_x_sq.sum);
    const double norm_diff = std::sqrt(diff_sq.sum);
    const double l_sc = norm_diff / norm_x;
    const double l_mag = mag_sum.sum / static_cast<double>(count);
    const double value = l_sc + l_mag;

    if (grad != nullptr) {
        // d(loss)/d(loss-side magnitudes of xhat).
        std::vector<double> g_loss_mag(count);
        const double inv_count = 1.0 / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
            double g = 0.0;
            if (norm_diff > 0.0) {
                g += (mh.mag[i] - mx.mag[i]) / (norm_diff * norm_x);
            }
            const double ld = std::log(mh.mag[i] + log_epsilon) -
                              std::log(mx.mag[i] + log_epsilon);
            if (ld > 0.0) {
                g += inv_count / (mh.mag[i] + log_epsilon);
            } else if (ld < 0.0) {
                g -= inv_count / (mh.mag[i] + log_epsilon);
            }
            g_loss_mag[i] = g * scale;
        }
        // Back through the mel projection onto raw magnitudes.
        std::vector<double> g_raw;
        if (bank_ptr != nullptr) {
            g_raw.assign(fw_h.frames * fw_h.bins, 0.0);
            for (std::size_t f = 0; f < fw_h.frames; ++f) {
                const double* gm = g_loss_mag.data() + f * bank_ptr->mel_bins;
                double* gr = g_raw.data() + f * fw_h.bins;
                for (std::size_t m = 0; m < bank_ptr->mel_bins; ++m) {
                    const double g = gm[m];
                    if (g == 0.0) continue;
                    const double* row = bank_ptr->weights.data() + m * bank_ptr->fft_bins;
                    for (std::size_t b = 0; b < fw_h.bins; ++b) gr[b] += g * row[b];
                }
            }
        } else {
            g_raw = std::move(g_loss_mag);
        }
        // Magnitude to complex parts; exactly silent bins take subgradient
        // zero, everywhere else the exact quotient matches the forward pass.
        std::vector<double> g_re(fw_h.re.size()), g_im(fw_h.im.size());
        for (std::size_t i = 0; i < g_re.size(); ++i) {
            const double m = std::sqrt(fw_h.re[i] * fw_h.re[i] +
                                       fw_h.im[i] * fw_h.im[i]);
            if (m == 0.0) continue;
            g_re[i] = g_raw[i] * fw_h.re[i] / m;
            g_im[i] = g_raw[i] * fw_h.im[i] / m;
        }
        detail::stft_complex_adjoint(fw_h, g_re, g_im, *grad);
    }
    return value;
}

void validate_config(const LossConfig& config) {
    if (config.lambda_sl1 < 0.0 || config.lambda_stft < 0.0) {
        raise(ErrorCode::InvalidArgument, "loss weights must be non-negative");
    }
    if (config.lambda_stft > 0.0 && config.resolutions.empty()) {
        raise(ErrorCode::InvalidArgument, "spectral loss enabled with no resolutions");
    }
    if (config.beta <= 0.0) raise(ErrorCode::InvalidArgument, "beta must be positive");
    if (config.log_epsilon <= 0.0) raise(ErrorCode::InvalidArgument, "log epsilon must be positive");
}

} // namespace

double smooth_l1(const AudioBuffer& x, const AudioBuffer& xhat, double beta) {
    check_lengths(x, xhat);
    if (beta <= 0.0) raise(ErrorCode::InvalidArgument, "beta must be positive");
    if (x.samples.empty()) raise(ErrorCode::EmptySignal, "smooth L1 of empty signals");
    KahanSum sum;
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
        const double d = std::abs(x.samples[i] - xhat.samples[i]);
        sum.add(d < beta ? 0.5 * d * d / beta : d - 0.5 * beta);
    }
    return sum.sum / static_cast<double>(x.samples.size());
}

double stft_loss_single(const AudioBuffer& x, const AudioBuffer& xhat,
                        const StftResolution& res, const std::optional<MelSettings>& mel,
                        double log_epsilon) {
    return stft_term(x, xhat, res, mel, log_epsilon, 1.0, nullptr);
}

double multires_stft_loss(const AudioBuffer& x, const AudioBuffer& xhat,
                          const LossConfig& config) {
    if (config.resolutions.empty()) {
        raise(ErrorCode::InvalidArgument, "no STFT resolutions configured");
    }
    double sum = 0.0;
    for (const StftResolution& res : config.resolutions) {
        sum += stft_term(x, xhat, res, config.mel, config.log_epsilon, 1.0, nullptr);
    }
    return sum / static_cast<double>(config.resolutions.size());
}

std::pair<double, LossParts> total_loss(const AudioBuffer& x, const AudioBuffer& xhat,
                                        const LossConfig& config) {
    validate_config(config);
    check_lengths(x, xhat);
    LossParts parts;
    if (config.lambda_sl1 > 0.0) parts.sl1 = smooth_l1(x, xhat, config.beta);
    if (config.lambda_stft > 0.0) parts.stft = multires_stft_loss(x, xhat, config);
    return {config.lambda_sl1 * parts.sl1 + config.lambda_stft * parts.stft, parts};
}

std::pair<double, LossParts> total_loss_with_grad(const AudioBuffer& x,
                                                  const AudioBuffer& xhat,
                                                  const LossConfig& config,
                                                  std::vector<double>& grad) {
    validate_config(config);
    check_lengths(x, xhat);
    const std::size_t n = x.samples.size();
    grad.assign(n, 0.0);
    LossParts parts;
    if (config.lambda_sl1 > 0.0) {
        if (n == 0) raise(ErrorCode::EmptySignal, "smooth L1 of empty signals");
        KahanSum sum;
        const double w = config.lambda_sl1 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x.samples[i] - xhat.samples[i];
            const double ad = std::abs(d);
            if (ad < config.beta) {
                sum.add(0.5 * ad * ad / config.beta);
                grad[i] += w * (-d / config.beta);
            } else {
                sum.add(ad - 0.5 * config.beta);
                grad[i] += w * (d > 0.0 ? -1.0 : 1.0);
            }
        }
        parts.sl1 = sum.sum / static_cast<double>(n);
    }
    if (config.lambda_stft > 0.0) {
        const double scale =
            config.lambda_stft / static_cast<double>(config.resolutions.size());
        double sum = 0.0;
        for (const StftResolution& res : config.resolutions) {
            sum += stft_term(x, xhat, res, config.mel, config.log_epsilon, scale, &grad);
        }
        parts.stft = sum / static_cast<double>(config.resolutions.size());
    }
    return {config.lambda_sl1 * parts.sl1 + config.lambda_stft * parts.stft, parts};
}

LossConfig loss_preset(const std::string& name) {
    auto res_list = [](std::initializer_list<std::size_t> ffts) {
        std::vector<StftResolution> out;
        for (std::size_t fft : ffts) out.push_back({fft, fft / 8, fft});
        return out;
    };
    LossConfig config;
    if (name == "l1_melstft") {
        config.resolutions = res_list({512, 1024, 2048});
        config.mel = MelSettings{};
    } else if (name == "melstft_only") {
        config.lambda_sl1 = 0.0;
        config.resolutions = res_list({512, 1024, 2048});
        config.mel = MelSettings{};
    } else if (name == "l1_stft") {
        config.resolutions = res_list({128, 256, 512, 1024, 2048});
    } else if (name == "stft_only") {
        config.lambda_sl1 = 0.0;
        config.resolutions = res_list({128, 256, 512, 1024, 2048});
    } else {
        raise(ErrorCode::UnknownPreset, "unknown loss preset: " + name);
    }
    return config;
}

} // namespace resin
