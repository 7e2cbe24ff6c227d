#include "resin/target_net.hpp"

#include "resin/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace resin {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'I', 'R'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    if (pos + 4 > bytes.size()) raise(ErrorCode::CorruptHeader, "weight file truncated");
    std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                      (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
    pos += 4;
    return v;
}

// Widths of every layer including the embedding input and scalar output.
std::vector<std::size_t> layer_sizes(const TargetNetConfig& config) {
    std::vector<std::size_t> sizes;
    sizes.push_back(config.input_dim());
    for (std::size_t w : config.hidden_widths) sizes.push_back(w);
    sizes.push_back(1);
    return sizes;
}

void validate_config(const TargetNetConfig& config) {
    if (config.embedding_size == 0) raise(ErrorCode::InvalidArgument, "embedding size must be positive");
    for (std::size_t w : config.hidden_widths) {
        if (w == 0) raise(ErrorCode::InvalidArgument, "hidden width must be positive");
    }
}

} // namespace

void positional_embedding(double t, std::size_t embedding_size, double* out) {
    double scaled = std::numbers::pi * t;
    for (std::size_t k = 0; k < embedding_size; ++k) {
        out[2 * k] = std::sin(scaled);
        out[2 * k + 1] = std::cos(scaled);
        scaled *= 2.0;
    }
}

std::vector<double> positional_embedding(double t, std::size_t embedding_size) {
    std::vector<double> out(2 * embedding_size);
    positional_embedding(t, embedding_size, out.data());
    return out;
}

std::size_t param_count(const TargetNetConfig& config) {
    validate_config(config);
    const std::vector<std::size_t> sizes = layer_sizes(config);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        total += sizes[l] * sizes[l + 1] + sizes[l + 1];
    }
    return total;
}

double forward(const TargetNetParams& params, double t) {
    TargetForwardCache cache = forward_batch(params, {t});
    return cache.output[0];
}

TargetForwardCache forward_batch(const TargetNetParams& params,
                                 const std::vector<double>& times) {
    validate_config(params.config);
    if (params.theta.size() != param_count(params.config)) {
        raise(ErrorCode::DimensionMismatch, "theta length does not match architecture");
    }
    const std::size_t n = times.size();
    const std::size_t in_dim = params.config.input_dim();
    const std::vector<std::size_t> sizes = layer_sizes(params.config);
    const std::size_t num_layers = sizes.size() - 1;

    TargetForwardCache cache;
    cache.embeddings.resize(n * in_dim);
    for (std::size_t i = 0; i < n; ++i) {
        positional_embedding(times[i], params.config.embedding_size,
                             cache.embeddings.data() + i * in_dim);
    }

    std::size_t hidden_total = 0;
    for (std::size_t l = 0; l + 1 < num_layers; ++l) hidden_total += sizes[l + 1];
    cache.hidden.resize(n * hidden_total);
    cache.output.resize(n);

    std::vector<double> act(cache.embeddings);
    std::size_t cur = in_dim;
    std::size_t offset = 0;
    std::size_t hidden_off = 0;
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t out_dim = sizes[l + 1];
        const double* w = params.theta.data() + offset;
        const double* b = w + cur * out_dim;
        const bool last = (l + 1 == num_layers);
        std::vector<double> next(n * out_dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = act.data() + i * cur;
            double* y = next.data() + i * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double* row = w + o * cur;
                double sum = b[o];
                for (std::size_t j = 0; j < cur; ++j) sum += row[j] * x[j];
                y[o] = sum;
            }
        }
        if (last) {
            for (std::size_t i = 0; i < n; ++i) cache.output[i] = next[i];
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(next.begin() + i * out_dim, next.begin() + (i + 1) * out_dim,
                          cache.hidden.begin() + i * hidden_total + hidden_off);
            }
            hidden_off += out_dim;
            for (double& v : next) v = std::max(v, 0.0);
        }
        offset += cur * out_dim + out_dim;
        cur = out_dim;
        act.swap(next);
    }
    return cache;
}

void backward_batch(const TargetNetParams& params, const std::vector<double>& times,
                    const TargetForwardCache& cache, const std::vector<double>& grad_output,
                    std::vector<double>& grad_theta) {
    const std::size_t n = times.size();
    if (grad_output.size() != n) raise(ErrorCode::DimensionMismatch, "grad length mismatch");
    if (grad_theta.size() != params.theta.size()) {
        raise(ErrorCode::DimensionMismatch, "grad_theta length mismatch");
    }
    const std::size_t in_dim = params.config.input_dim();
    const std::vector<std::size_t> sizes = layer_sizes(params.config);
    const std::size_t num_layers = sizes.size() - 1;

    std::size_t hidden_total = 0;
    for (std::size_t l = 0; l + 1 < num_layers; ++l) hidden_total += sizes[l + 1];

    // Per-layer hidden offsets and theta offsets.
    std::vector<std::size_t> hoff(num_layers, 0);
    std::vector<std::size_t> toff(num_layers, 0);
    {
        std::size_t h = 0, t = 0, cur = in_dim;
        for (std::size_t l = 0; l < num_layers; ++l) {
            hoff[l] = h;
            toff[l] = t;
            const std::size_t out_dim = sizes[l + 1];
            if (l + 1 < num_layers) h += out_dim;
            t += cur * out_dim + out_dim;
            cur = out_dim;
        }
    }

    // Activation of layer l's input for sample i.
    auto input_act = [&](std::size_t l, std::size_t i, std::vector<double>& buf) -> const double* {
        if (l == 0) return cache.embeddings.data() + i * in_dim;
        const std::size_t w = sizes[l];
        const double* pre = cache.hidden.data() + i * hidden_total + hoff[l - 1];
        buf.resize(w);
        for (std::size_t j = 0; j < w; ++j) buf[j] = std::max(pre[j], 0.0);
        return buf.data();
    };

    std::vector<double> delta(n), next_delta;
    for (std::size_t i = 0; i < n; ++i) delta[i] = grad_output[i];
    std::size_t delta_dim = 1;

    std::vector<double> buf;
    for (std::size_t l = num_layers; l-- > 0;) {
        const std::size_t out_dim = sizes[l + 1];
        const std::size_t cur = sizes[l];
        double* gw = grad_theta.data() + toff[l];
        double* gb = gw + cur * out_dim;
        const double* w = params.theta.data() + toff[l];
        next_delta.assign(n * cur, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = input_act(l, i, buf);
            const double* d = delta.data() + i * delta_dim;
            double* nd = next_delta.data() + i * cur;
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double g = d[o];
                if (g == 0.0) continue;
                double* grow = gw + o * cur;
                const double* wrow = w + o * cur;
                for (std::size_t j = 0; j < cur; ++j) {
                    grow[j] += g * x[j];
                    nd[j] += g * wrow[j];
                }
                gb[o] += g;
            }
        }
        if (l > 0) {
            // Gate by the stored pre-activation of the previous layer.
            const std::size_t prev_w = sizes[l];
            for (std::size_t i = 0; i < n; ++i) {
                const double* pre = cache.hidden.data() + i * hidden_total + hoff[l - 1];
                double* nd = next_delta.data() + i * prev_w;
                for (std::size_t j = 0; j < prev_w; ++j) {
                    if (pre[j] <= 0.0) nd[j] = 0.0;
                }
            }
        }
        delta.swap(next_delta);
        delta_dim = cur;
    }
}

AudioBuffer render(const TargetNetParams& params, const CoordinateGrid& grid) {
    TargetForwardCache cache = forward_batch(params, grid.times);
    AudioBuffer out;
    out.sample_rate = grid.nominal_rate;
    out.samples = std::move(cache.output);
    return out;
}

CoordinateGrid make_grid(std::size_t num_samples, int rate) {
    if (num_samples < 2) raise(ErrorCode::InvalidArgument, "grid needs at least two samples");
    CoordinateGrid grid;
    grid.nominal_rate = rate;
    grid.times.resize(num_samples);
    const double denom = static_cast<double>(num_samples - 1);
    for (std::size_t i = 0; i < num_samples; ++i) {
        grid.times[i] = static_cast<double>(i) / denom;
    }
    return grid;
}

std::size_t retargeted_sample_count(std::size_t num_samples, int source_rate, int target_rate) {
    if (source_rate <= 0 || target_rate <= 0) {
        raise(ErrorCode::InvalidArgument, "sample rates must be positive");
    }
    return static_cast<std::size_t>(std::llround(
        static_cast<double>(num_samples) * target_rate / source_rate));
}

std::vector<std::uint8_t> serialize_params(const TargetNetParams& params) {
    validate_config(params.config);
    if (params.theta.size() != param_count(params.config)) {
        raise(ErrorCode::DimensionMismatch, "theta length does not match architecture");
    }
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u32(out, kVersion);
    append_u32(out, static_cast<std::uint32_t>(params.config.embedding_size));
    append_u32(out, static_cast<std::uint32_t>(params.config.hidden_widths.size()));
    for (std::size_t w : params.config.hidden_widths) {
        append_u32(out, static_cast<std::uint32_t>(w));
    }
    for (double v : params.theta) {
        const float f = static_cast<float>(v);
        append_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

TargetNetParams deserialize_params(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        raise(ErrorCode::BadMagic, "not an INR weight file");
    }
    std::size_t pos = 4;
    const std::uint32_t version = read_u32(bytes, pos);
    if (version != kVersion) raise(ErrorCode::VersionMismatch, "unsupported weight file version");
    TargetNetParams params;
    params.config.embedding_size = read_u32(bytes, pos);
    const std::uint32_t layers = read_u32(bytes, pos);
    params.config.hidden_widths.resize(layers);
    for (std::uint32_t l = 0; l < layers; ++l) {
        params.config.hidden_widths[l] = read_u32(bytes, pos);
    }
    validate_config(params.config);
    const std::size_t count = param_count(params.config);
    if (bytes.size() - pos != count * 4) {
        raise(ErrorCode::DimensionMismatch, "weight payload does not match architecture");
    }
    params.theta.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t raw = read_u32(bytes, pos);
        params.theta[i] = static_cast<double>(std::bit_cast<float>(raw));
    }
    return params;
}

void save_params(const TargetNetParams& params, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_params(params);
    std::ofstream f(path, std::ios::binary);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) raise(ErrorCode::IoError, "short write to " + path);
}

TargetNetParams load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return deserialize_params(bytes);
}

} // namespace resin
