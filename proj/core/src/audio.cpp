#include "resin/audio.hpp"

#include "resin/errors.hpp"
#include "resin/fft.hpp"
#include "stft_internal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace resin {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

float f32_from_bits(std::uint32_t bits) {
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
}

std::uint32_t bits_from_f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    return bits;
}

double kaiser_i0(double x) {
    double sum = 1.0;
    double term = 1.0;
    const double half_sq = 0.25 * x * x;
    for (int k = 1; k < 64; ++k) {
        term *= half_sq / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

} // namespace

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

std::size_t stft_frame_count(std::size_t signal_len, std::size_t hop) {
    return signal_len / hop + 1;
}

AudioBuffer read_wav(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) raise(ErrorCode::IoError, "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        raise(ErrorCode::CorruptHeader, "not a RIFF/WAVE file: " + path);
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + off);
        const std::uint32_t chunk_len = read_u32(bytes.data() + off + 4);
        const std::size_t body = off + 8;
        if (body + chunk_len > bytes.size()) {
            raise(ErrorCode::CorruptHeader, "truncated chunk in " + path);
        }
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_len < 16) raise(ErrorCode::CorruptHeader, "fmt chunk too small in " + path);
            format = read_u16(bytes.data() + body);
            channels = read_u16(bytes.data() + body + 2);
            rate = read_u32(bytes.data() + body + 4);
            bits = read_u16(bytes.data() + body + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + body;
            data_len = chunk_len;
        }
        off = body + chunk_len + (chunk_len & 1);
    }

    if (!have_fmt || data == nullptr) {
        raise(ErrorCode::CorruptHeader, "missing fmt or data chunk in " + path);
    }
    if (channels == 0 || rate == 0) {
        raise(ErrorCode::CorruptHeader, "zero channels or sample rate in " + path);
    }
    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32) {
        raise(ErrorCode::UnsupportedFormat,
              "format " + std::to_string(format) + "/" + std::to_string(bits) + " bit in " + path);
    }

    const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_len / frame_bytes;

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    out.samples.resize(frames);
    const double inv_ch = 1.0 / channels;
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* p = data + f * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                const std::int16_t s = static_cast<std::int16_t>(read_u16(p));
                acc += static_cast<double>(s) / 32768.0;
            } else {
                acc += static_cast<double>(f32_from_bits(read_u32(p)));
            }
        }
        out.samples[f] = acc * inv_ch;
    }
    return out;
}

void write_wav(const AudioBuffer& buffer, const std::string& path, WavEncoding encoding) {
    for (double s : buffer.samples) {
        if (!std::isfinite(s)) raise(ErrorCode::InvalidArgument, "non-finite sample");
    }
    if (buffer.sample_rate <= 0) raise(ErrorCode::InvalidArgument, "sample_rate must be positive");

    const bool pcm16 = encoding == WavEncoding::Pcm16;
    const std::uint32_t bytes_per_sample = pcm16 ? 2 : 4;
    const std::uint32_t data_len = static_cast<std::uint32_t>(buffer.samples.size() * bytes_per_sample);

    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, pcm16 ? 1 : 3);
    put_u16(out, 1); // mono
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
    put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * bytes_per_sample);
    put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
    put_u16(out, static_cast<std::uint16_t>(bytes_per_sample * 8));
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_len);

    for (double s : buffer.samples) {
        if (pcm16) {
            double v = std::round(s * 32768.0);
            v = std::clamp(v, -32768.0, 32767.0);
            put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
        } else {
            put_u32(out, bits_from_f32(static_cast<float>(s)));
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) raise(ErrorCode::IoError, "cannot open for writing: " + path);
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file) raise(ErrorCode::IoError, "write failed: " + path);
}

Spectrogram stft(const AudioBuffer& x, std::size_t fft_size, std::size_t hop) {
    return stft(x, fft_size, hop, fft_size);
}

Spectrogram stft(const AudioBuffer& x, std::size_t fft_size, std::size_t hop, std::size_t win) {
    const detail::StftFrames fw = detail::stft_complex(x.samples, fft_size, hop, win);

    Spectrogram spec;
    spec.frames = fw.frames;
    spec.bins = fw.bins;
    spec.fft_size = fft_size;
    spec.hop = hop;
    spec.sample_rate = x.sample_rate;
    spec.magnitudes.resize(fw.frames * fw.bins);
    for (std::size_t i = 0; i < spec.magnitudes.size(); ++i) {
        spec.magnitudes[i] = std::sqrt(fw.re[i] * fw.re[i] + fw.im[i] * fw.im[i]);
    }
    return spec;
}

double mel_scale(double f_hz) { return 2595.0 * std::log10(1.0 + f_hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank build_mel_filterbank(std::size_t mel_bins, std::size_t fft_size,
                                   int sample_rate, double f_min, double f_max) {
    if (mel_bins < 1) raise(ErrorCode::InvalidRange, "mel_bins must be >= 1");
    const double nyquist = 0.5 * sample_rate;
    if (!(f_min >= 0.0 && f_min < f_max && f_max <= nyquist)) {
        raise(ErrorCode::InvalidRange, "need 0 <= f_min < f_max <= sample_rate/2");
    }

    const std::size_t fft_bins = fft_size / 2 + 1;
    MelFilterbank fb;
    fb.mel_bins = mel_bins;
    fb.fft_bins = fft_bins;
    fb.f_min = f_min;
    fb.f_max = f_max;
    fb.weights.assign(mel_bins * fft_bins, 0.0);
    fb.centers_hz.resize(mel_bins);

    // mel_bins + 2 equispaced mel points: edges and centers.
    const double mel_lo = mel_scale(f_min);
    const double mel_hi = mel_scale(f_max);
    std::vector<double> hz(mel_bins + 2);
    for (std::size_t i = 0; i < mel_bins + 2; ++i) {
        const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(mel_bins + 1);
        hz[i] = mel_to_hz(mel);
    }

    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
    for (std::size_t m = 0; m < mel_bins; ++m) {
        const double left = hz[m];
        const double center = hz[m + 1];
        const double right = hz[m + 2];
        fb.centers_hz[m] = center;

        bool any = false;
        for (std::size_t k = 0; k < fft_bins; ++k) {
            const double f = static_cast<double>(k) * bin_hz;
            double v = 0.0;
            if (f > left && f < center) {
                v = (f - left) / (center - left);
            } else if (f == center) {
                v = 1.0;
            } else if (f > center && f < right) {
                v = (right - f) / (right - center);
            }
            if (v > 0.0) any = true;
            fb.weights[m * fft_bins + k] = v;
        }
        if (!any) {
            // Filter narrower than the bin spacing: unit spike at the
            // nearest bin keeps every row non-empty.
            const std::size_t k = static_cast<std::size_t>(std::clamp(
                std::llround(center / bin_hz), 0LL,
                static_cast<long long>(fft_bins - 1)));
            fb.weights[m * fft_bins + k] = 1.0;
        }
    }
    return fb;
}

AudioBuffer sinc_resample(const AudioBuffer& x, int target_rate) {
    if (target_rate <= 0) raise(ErrorCode::InvalidRange, "target_rate must be positive");
    if (x.sample_rate <= 0) raise(ErrorCode::InvalidArgument, "source sample_rate must be positive");
    if (target_rate == x.sample_rate) return x;

    const std::size_t len = x.samples.size();
    AudioBuffer out;
    out.sample_rate = target_rate;
    if (len == 0) return out;

    const double src = static_cast<double>(x.sample_rate);
    const double tgt = static_cast<double>(target_rate);
    const std::size_t out_len =
        static_cast<std::size_t>(std::llround(static_cast<double>(len) * tgt / src));
    out.samples.resize(out_len);

    constexpr double kBeta = 14.77;
    constexpr double kZeroCrossings = 64.0;
    // Cutoff as a fraction of the source rate; the kernel spans
    // kZeroCrossings sinc zeros on each side.
    const double cutoff = 0.5 * std::min(1.0, tgt / src);
    const double half_width = kZeroCrossings / (2.0 * cutoff);
    const double inv_i0_beta = 1.0 / kaiser_i0(kBeta);
    const double step = src / tgt;

    for (std::size_t j = 0; j < out_len; ++j) {
        const double pos = static_cast<double>(j) * step;
        const std::ptrdiff_t n0 = static_cast<std::ptrdiff_t>(std::ceil(pos - half_width));
        const std::ptrdiff_t n1 = static_cast<std::ptrdiff_t>(std::floor(pos + half_width));
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(n0, 0);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n1, static_cast<std::ptrdiff_t>(len) - 1);
        double acc = 0.0;
        for (std::ptrdiff_t n = lo; n <= hi; ++n) {
            const double tau = pos - static_cast<double>(n);
            const double u = 2.0 * cutoff * tau;
            const double s = (u == 0.0) ? 1.0 : std::sin(kPi * u) / (kPi * u);
            const double w = tau / half_width;
            const double kaiser = kaiser_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - w * w))) * inv_i0_beta;
            acc += x.samples[static_cast<std::size_t>(n)] * 2.0 * cutoff * s * kaiser;
        }
        out.samples[j] = acc;
    }
    return out;
}

void write_spectrogram_csv(const Spectrogram& spec, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) raise(ErrorCode::IoError, "cannot open for writing: " + path);
    std::fputs("frame,bin,magnitude\n", f);
    for (std::size_t fr = 0; fr < spec.frames; ++fr) {
        for (std::size_t b = 0; b < spec.bins; ++b) {
            std::fprintf(f, "%zu,%zu,%.9g\n", fr, b, spec.magnitudes[fr * spec.bins + b]);
        }
    }
    if (std::fclose(f) != 0) raise(ErrorCode::IoError, "write failed: " + path);
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::CorruptHeader: return "CorruptHeader";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::EmptySignal: return "EmptySignal";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::SilentReference: return "SilentReference";
        case ErrorCode::NonFiniteParams: return "NonFiniteParams";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InputTooShort: return "InputTooShort";
        case ErrorCode::InvalidBreakFrequency: return "InvalidBreakFrequency";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::UnreadableFile: return "UnreadableFile";
        case ErrorCode::DegenerateSignal: return "DegenerateSignal";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::CheckpointIoError: return "CheckpointIoError";
        case ErrorCode::UnknownPreset: return "UnknownPreset";
    }
    return "UnknownError";
}

} // namespace resin
