#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace resin {

// Mono sample sequence with its sampling rate. Samples are dimensionless
// amplitudes, nominally in [-1, 1]; 64-bit in memory, 32-bit on disk.
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 0;

    std::size_t size() const { return samples.size(); }
    double duration_seconds() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

// Magnitude spectrogram, frame-major: magnitudes[frame * bins + bin].
struct Spectrogram {
    std::vector<double> magnitudes;
    std::size_t frames = 0;
    std::size_t bins = 0;
    std::size_t fft_size = 0;
    std::size_t hop = 0;
    int sample_rate = 0;

    double at(std::size_t frame, std::size_t bin) const {
        return magnitudes[frame * bins + bin];
    }
};

// Triangular mel filterbank, row-major: weights[mel * fft_bins + bin].
struct MelFilterbank {
    std::vector<double> weights;
    std::size_t mel_bins = 0;
    std::size_t fft_bins = 0;
    double f_min = 0.0;
    double f_max = 0.0;
    std::vector<double> centers_hz; // filter peak frequencies, strictly increasing
};

enum class WavEncoding { Pcm16, Float32 };

// Reads a RIFF WAV file (PCM16 or IEEE float32). Multichannel input is
// averaged to mono; PCM16 samples are scaled by 1/32768.
AudioBuffer read_wav(const std::string& path);

// Writes a mono RIFF WAV file. Pcm16 clamps to [-1, 1 - 1/32768].
void write_wav(const AudioBuffer& buffer, const std::string& path, WavEncoding encoding);

// Short-time Fourier transform magnitudes. The signal is reflect-padded by
// fft_size/2 on each side; frame f covers padded samples [f*hop, f*hop+fft_size)
// under a periodic Hann window of length win (win <= fft_size, centered,
// zero-padded to fft_size; win == fft_size unless stated otherwise).
Spectrogram stft(const AudioBuffer& x, std::size_t fft_size, std::size_t hop);
Spectrogram stft(const AudioBuffer& x, std::size_t fft_size, std::size_t hop, std::size_t win);

// HTK mel scale: 2595 * log10(1 + f/700).
double mel_scale(double f_hz);
double mel_to_hz(double mel);

// Triangular filters with peak 1.0 at mel-equispaced centers between f_min
// and f_max. A filter narrower than the bin spacing falls back to a unit
// spike at the bin nearest its center so no row is ever empty.
MelFilterbank build_mel_filterbank(std::size_t mel_bins, std::size_t fft_size,
                                   int sample_rate, double f_min, double f_max);

// Band-limited resampling with a Kaiser-windowed sinc kernel
// (64 zero crossings, beta = 14.77); the anti-alias cutoff sits at
// min(source, target)/2. Output length is round(len * target / source).
AudioBuffer sinc_resample(const AudioBuffer& x, int target_rate);

// Frame-major CSV export with header "frame,bin,magnitude".
void write_spectrogram_csv(const Spectrogram& spec, const std::string& path);

// Number of STFT frames produced for a signal of the given length.
std::size_t stft_frame_count(std::size_t signal_len, std::size_t hop);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

} // namespace resin
