#include "resin/hypernet.hpp"

#include "hsck_internal.hpp"
#include "model_json_internal.hpp"
#include "resin/errors.hpp"
#include "resin/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace resin {

namespace {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

void elu_vec(const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = elu(in[i]);
}

// out[i] = grad_out[i] * ELU'(pre[i])
std::vector<double> elu_backward(const std::vector<double>& pre,
                                 const std::vector<double>& grad_out) {
    std::vector<double> g(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) g[i] = grad_out[i] * elu_grad(pre[i]);
    return g;
}

std::size_t conv_out_len(std::size_t t_in, std::size_t kernel, std::size_t stride,
                         std::size_t dilation, std::size_t pad) {
    const std::size_t span = (kernel - 1) * dilation + 1;
    if (t_in + pad < span) return 0;
    return (t_in + pad - span) / stride + 1;
}

// Left-padded (causal) conv. x is [c_in x t_in], w is [c_out x c_in x kernel],
// y is [c_out x t_out]; x positions before 0 read as zero.
void conv_forward(const double* x, std::size_t c_in, std::size_t t_in,
                  const double* w, const double* b, std::size_t c_out,
                  std::size_t kernel, std::size_t stride, std::size_t dilation,
                  std::size_t pad, double* y, std::size_t t_out) {
    for (std::size_t o = 0; o < c_out; ++o) {
        double* yo = y + o * t_out;
        for (std::size_t t = 0; t < t_out; ++t) yo[t] = b[o];
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* xc = x + c * t_in;
            const double* wk = w + (o * c_in + c) * kernel;
            for (std::size_t k = 0; k < kernel; ++k) {
                const double wv = wk[k];
                if (wv == 0.0) continue;
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(pad);
                for (std::size_t t = 0; t < t_out; ++t) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
                    yo[t] += wv * xc[src];
                }
            }
        }
    }
}

// Accumulates input/weight/bias grads; gx may be null when the input is data.
void conv_backward(const double* x, std::size_t c_in, std::size_t t_in,
                   const double* w, std::size_t c_out,
                   std::size_t kernel, std::size_t stride, std::size_t dilation,
                   std::size_t pad, const double* gy, std::size_t t_out,
                   double* gx, double* gw, double* gb) {
    for (std::size_t o = 0; o < c_out; ++o) {
        const double* gyo = gy + o * t_out;
        double bsum = 0.0;
        for (std::size_t t = 0; t < t_out; ++t) bsum += gyo[t];
        gb[o] += bsum;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* xc = x + c * t_in;
            double* gxc = gx != nullptr ? gx + c * t_in : nullptr;
            const double* wk = w + (o * c_in + c) * kernel;
            double* gwk = gw + (o * c_in + c) * kernel;
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::ptrdiff_t shift =
                    static_cast<std::ptrdiff_t>(k * dilation) - static_cast<std::ptrdiff_t>(pad);
                double wgrad = 0.0;
                const double wv = wk[k];
                for (std::size_t t = 0; t < t_out; ++t) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride) + shift;
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(t_in)) continue;
                    const double g = gyo[t];
                    wgrad += g * xc[src];
                    if (gxc != nullptr) gxc[src] += g * wv;
                }
                gwk[k] += wgrad;
            }
        }
    }
}

void validate_encoder(const EncoderConfig& e) {
    if (e.base_channels == 0 || e.latent_dim == 0) {
        raise(ErrorCode::InvalidArgument, "encoder channel counts must be positive");
    }
    if (e.strides.empty() || e.residual_dilations.empty()) {
        raise(ErrorCode::InvalidArgument, "encoder needs at least one stride and one dilation");
    }
    for (std::size_t s : e.strides) {
        if (s < 2) raise(ErrorCode::InvalidArgument, "strides must be at least 2");
    }
    for (std::size_t d : e.residual_dilations) {
        if (d == 0) raise(ErrorCode::InvalidArgument, "dilations must be positive");
    }
}

void validate_head(const HeadConfig& h) {
    if (h.num_layers != 6) raise(ErrorCode::InvalidArgument, "head layer count is fixed at 6");
    if (h.hidden_width == 0 || h.output_dim == 0) {
        raise(ErrorCode::InvalidArgument, "head dimensions must be positive");
    }
}

struct LayoutBuilder {
    std::vector<TensorSpec> specs;
    std::size_t offset = 0;

    void add(std::string name, std::vector<std::size_t> shape, std::size_t fan_in) {
        TensorSpec spec;
        spec.name = std::move(name);
        spec.shape = std::move(shape);
        spec.offset = offset;
        spec.size = 1;
        for (std::size_t d : spec.shape) spec.size *= d;
        spec.fan_in = fan_in;
        offset += spec.size;
        specs.push_back(std::move(spec));
    }

    void conv(const std::string& stem, std::size_t c_out, std::size_t c_in, std::size_t kernel) {
        add(stem + ".w", {c_out, c_in, kernel}, c_in * kernel);
        add(stem + ".b", {c_out}, c_in * kernel);
    }

    void affine(const std::string& stem, std::size_t out, std::size_t in) {
        add(stem + ".w", {out, in}, in);
        add(stem + ".b", {out}, in);
    }
};

const TensorSpec& find_tensor(const HyperNetModel& model, const std::string& name) {
    for (const TensorSpec& s : model.layout) {
        if (s.name == name) return s;
    }
    raise(ErrorCode::InvalidArgument, "no tensor named " + name);
}

// Weight/bias pointer pair for one conv or affine stem.
struct TensorPair {
    const double* w;
    const double* b;
    std::size_t w_off;
    std::size_t b_off;
};

TensorPair tensors(const HyperNetModel& model, const std::string& stem) {
    const TensorSpec& w = find_tensor(model, stem + ".w");
    const TensorSpec& b = find_tensor(model, stem + ".b");
    return {model.params.data() + w.offset, model.params.data() + b.offset, w.offset, b.offset};
}

} // namespace

std::size_t EncoderConfig::min_input_length() const {
    std::size_t p = 1;
    for (std::size_t s : strides) p *= s;
    return p;
}

std::vector<TensorSpec> model_layout(const EncoderConfig& encoder, const HeadConfig& head) {
    validate_encoder(encoder);
    validate_head(head);
    LayoutBuilder lb;
    lb.conv("enc.in", encoder.base_channels, 1, 7);
    std::size_t channels = encoder.base_channels;
    for (std::size_t b = 0; b < encoder.strides.size(); ++b) {
        const std::string block = "enc.b" + std::to_string(b);
        for (std::size_t r = 0; r < encoder.residual_dilations.size(); ++r) {
            const std::string unit = block + ".r" + std::to_string(r);
            lb.conv(unit + ".dil", channels, channels, 3);
            lb.conv(unit + ".mix", channels, channels, 1);
        }
        lb.conv(block + ".down", channels * 2, channels, 2 * encoder.strides[b]);
        channels *= 2;
    }
    lb.conv("enc.out", encoder.latent_dim, channels, 1);
    std::size_t in_dim = encoder.latent_dim;
    for (std::size_t l = 0; l < head.num_layers; ++l) {
        const bool last = (l + 1 == head.num_layers);
        const std::size_t out_dim = last ? head.output_dim : head.hidden_width;
        lb.affine("head.l" + std::to_string(l), out_dim, in_dim);
        in_dim = out_dim;
    }
    return lb.specs;
}

std::size_t model_param_count(const EncoderConfig& encoder, const HeadConfig& head) {
    const std::vector<TensorSpec> layout = model_layout(encoder, head);
    return layout.back().offset + layout.back().size;
}

HyperNetModel init_model(std::uint64_t seed, const EncoderConfig& encoder,
                         const HeadConfig& head, const TargetNetConfig& target) {
    HyperNetModel model;
    model.encoder = encoder;
    model.head = head;
    model.target = target;
    model.seed = seed;
    const std::size_t theta_len = param_count(target);
    if (model.head.output_dim == 0) {
        model.head.output_dim = theta_len;
    } else if (model.head.output_dim != theta_len) {
        raise(ErrorCode::DimensionMismatch, "head output does not match target parameter count");
    }
    model.layout = model_layout(model.encoder, model.head);
    model.params.resize(model.layout.back().offset + model.layout.back().size);
    const std::string last_stem = "head.l" + std::to_string(model.head.num_layers - 1) + ".";
    for (std::size_t i = 0; i < model.layout.size(); ++i) {
        const TensorSpec& spec = model.layout[i];
        Rng rng(seed, i);
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        const double scale = spec.name.starts_with(last_stem) ? 0.01 : 1.0;
        double* p = model.params.data() + spec.offset;
        for (std::size_t j = 0; j < spec.size; ++j) p[j] = scale * rng.uniform(-bound, bound);
    }
    // Snap to the float32 grid so checkpoints round-trip exactly.
    for (double& v : model.params) v = static_cast<double>(static_cast<float>(v));
    return model;
}

EncodeCache encode_forward(const HyperNetModel& model, const std::vector<double>& samples) {
    const EncoderConfig& enc = model.encoder;
    if (samples.size() < enc.min_input_length()) {
        raise(ErrorCode::InputTooShort, "input shorter than the encoder's total stride");
    }
    EncodeCache cache;
    cache.input = samples;
    std::size_t t = samples.size();
    std::size_t channels = enc.base_channels;

    std::vector<double> cur(channels * t);
    {
        const TensorPair p = tensors(model, "enc.in");
        conv_forward(cache.input.data(), 1, t, p.w, p.b, channels, 7, 1, 1, 6, cur.data(), t);
    }
    cache.blocks.resize(enc.strides.size());
    for (std::size_t bi = 0; bi < enc.strides.size(); ++bi) {
        EncodeCache::BlockCache& block = cache.blocks[bi];
        block.t_in = t;
        block.res.resize(enc.residual_dilations.size());
        const std::string stem = "enc.b" + std::to_string(bi);
        for (std::size_t r = 0; r < enc.residual_dilations.size(); ++r) {
            const std::size_t dil = enc.residual_dilations[r];
            EncodeCache::ResidualCache& rc = block.res[r];
            rc.in = std::move(cur);
            elu_vec(rc.in, rc.elu1);
            const std::string unit = stem + ".r" + std::to_string(r);
            const TensorPair dp = tensors(model, unit + ".dil");
            rc.h.resize(channels * t);
            conv_forward(rc.elu1.data(), channels, t, dp.w, dp.b, channels, 3, 1, dil, 2 * dil,
                         rc.h.data(), t);
            elu_vec(rc.h, rc.elu2);
            const TensorPair mp = tensors(model, unit + ".mix");
            std::vector<double> mix(channels * t);
            conv_forward(rc.elu2.data(), channels, t, mp.w, mp.b, channels, 1, 1, 1, 0,
                         mix.data(), t);
            for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += rc.in[i];
            cur = std::move(mix);
        }
        block.res_out = std::move(cur);
        elu_vec(block.res_out, block.elu_down);
        const std::size_t stride = enc.strides[bi];
        const TensorPair sp = tensors(model, stem + ".down");
        const std::size_t t_out = conv_out_len(t, 2 * stride, stride, 1, stride);
        cur.assign(channels * 2 * t_out, 0.0);
        conv_forward(block.elu_down.data(), channels, t, sp.w, sp.b, channels * 2,
                     2 * stride, stride, 1, stride, cur.data(), t_out);
        block.t_out = t_out;
        t = t_out;
        channels *= 2;
    }
    cache.trunk = std::move(cur);
    cache.t_final = t;
    elu_vec(cache.trunk, cache.elu_latent);
    {
        const TensorPair p = tensors(model, "enc.out");
        cache.latent_seq.resize(enc.latent_dim * t);
        conv_forward(cache.elu_latent.data(), channels, t, p.w, p.b, enc.latent_dim,
                     1, 1, 1, 0, cache.latent_seq.data(), t);
    }
    cache.z.assign(enc.latent_dim, 0.0);
    for (std::size_t c = 0; c < enc.latent_dim; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < t; ++i) sum += cache.latent_seq[c * t + i];
        cache.z[c] = sum / static_cast<double>(t);
    }
    return cache;
}

void encode_backward(const HyperNetModel& model, const EncodeCache& cache,
                     const std::vector<double>& grad_z, std::vector<double>& grad_params) {
    const EncoderConfig& enc = model.encoder;
    if (grad_z.size() != enc.latent_dim || grad_params.size() != model.params.size()) {
        raise(ErrorCode::DimensionMismatch, "encoder grad shapes disagree");
    }
    auto grads = [&](const std::string& stem) -> std::pair<double*, double*> {
        const TensorSpec& w = find_tensor(model, stem + ".w");
        const TensorSpec& b = find_tensor(model, stem + ".b");
        return {grad_params.data() + w.offset, grad_params.data() + b.offset};
    };

    const std::size_t t_final = cache.t_final;
    std::size_t channels = enc.base_channels << enc.strides.size();

    // Mean pool spreads grad_z uniformly over time.
    std::vector<double> g_latent(enc.latent_dim * t_final);
    for (std::size_t c = 0; c < enc.latent_dim; ++c) {
        const double g = grad_z[c] / static_cast<double>(t_final);
        for (std::size_t i = 0; i < t_final; ++i) g_latent[c * t_final + i] = g;
    }

    std::vector<double> g_cur;
    {
        const TensorPair p = tensors(model, "enc.out");
        auto [gw, gb] = grads("enc.out");
        std::vector<double> g_elu(cache.elu_latent.size(), 0.0);
        conv_backward(cache.elu_latent.data(), channels, t_final, p.w, enc.latent_dim,
                      1, 1, 1, 0, g_latent.data(), t_final, g_elu.data(), gw, gb);
        g_cur = elu_backward(cache.trunk, g_elu);
    }

    for (std::size_t bi = enc.strides.size(); bi-- > 0;) {
        const EncodeCache::BlockCache& block = cache.blocks[bi];
        const std::size_t stride = enc.strides[bi];
        channels /= 2;
        const std::string stem = "enc.b" + std::to_string(bi);
        {
            const TensorPair p = tensors(model, stem + ".down");
            auto [gw, gb] = grads(stem + ".down");
            std::vector<double> g_elu(block.elu_down.size(), 0.0);
            conv_backward(block.elu_down.data(), channels, block.t_in, p.w, channels * 2,
                          2 * stride, stride, 1, stride, g_cur.data(), block.t_out,
                          g_elu.data(), gw, gb);
            g_cur = elu_backward(block.res_out, g_elu);
        }
        for (std::size_t r = enc.residual_dilations.size(); r-- > 0;) {
            const EncodeCache::ResidualCache& rc = block.res[r];
            const std::size_t dil = enc.residual_dilations[r];
            const std::size_t t = block.t_in;
            const std::string unit = stem + ".r" + std::to_string(r);
            const TensorPair mp = tensors(model, unit + ".mix");
            auto [mgw, mgb] = grads(unit + ".mix");
            std::vector<double> g_elu2(rc.elu2.size(), 0.0);
            conv_backward(rc.elu2.data(), channels, t, mp.w, channels, 1, 1, 1, 0,
                          g_cur.data(), t, g_elu2.data(), mgw, mgb);
            const std::vector<double> g_h = elu_backward(rc.h, g_elu2);
            const TensorPair dp = tensors(model, unit + ".dil");
            auto [dgw, dgb] = grads(unit + ".dil");
            std::vector<double> g_elu1(rc.elu1.size(), 0.0);
            conv_backward(rc.elu1.data(), channels, t, dp.w, channels, 3, 1, dil, 2 * dil,
                          g_h.data(), t, g_elu1.data(), dgw, dgb);
            std::vector<double> g_in = elu_backward(rc.in, g_elu1);
            for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] += g_cur[i]; // skip path
            g_cur = std::move(g_in);
        }
    }
    {
        const TensorPair p = tensors(model, "enc.in");
        auto [gw, gb] = grads("enc.in");
        conv_backward(cache.input.data(), 1, cache.input.size(), p.w, enc.base_channels,
                      7, 1, 1, 6, g_cur.data(), cache.input.size(), nullptr, gw, gb);
    }
}

TargetNetParams head_forward(const HyperNetModel& model, const std::vector<double>& z) {
    HeadCache cache = head_forward_cache(model, z);
    TargetNetParams out;
    out.config = model.target;
    out.theta = std::move(cache.theta);
    return out;
}

HeadCache head_forward_cache(const HyperNetModel& model, const std::vector<double>& z) {
    const HeadConfig& head = model.head;
    if (z.size() != model.encoder.latent_dim) {
        raise(ErrorCode::DimensionMismatch, "latent length does not match encoder config");
    }
    const double* params = model.params.data();
    HeadCache cache;
    cache.z = z;
    cache.pre.resize((head.num_layers - 1) * head.hidden_width);
    std::vector<double> act = z;
    std::size_t in_dim = model.encoder.latent_dim;
    for (std::size_t l = 0; l < head.num_layers; ++l) {
        const bool last = (l + 1 == head.num_layers);
        const std::size_t out_dim = last ? head.output_dim : head.hidden_width;
        const TensorPair p = tensors(model, "head.l" + std::to_string(l));
        std::vector<double> next(out_dim);
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* row = p.w + o * in_dim;
            double sum = p.b[o];
            for (std::size_t j = 0; j < in_dim; ++j) sum += row[j] * act[j];
            next[o] = sum;
        }
        if (last) {
            cache.theta = std::move(next);
        } else {
            std::copy(next.begin(), next.end(),
                      cache.pre.begin() + static_cast<std::ptrdiff_t>(l * head.hidden_width));
            for (double& v : next) v = elu(v);
            act = std::move(next);
        }
        in_dim = out_dim;
    }
    (void)params;
    return cache;
}

void head_backward(const HyperNetModel& model, const HeadCache& cache,
                   const std::vector<double>& grad_theta, std::vector<double>& grad_params,
                   std::vector<double>& grad_z) {
    const HeadConfig& head = model.head;
    if (grad_theta.size() != head.output_dim || grad_params.size() != model.params.size()) {
        raise(ErrorCode::DimensionMismatch, "head grad shapes disagree");
    }
    const std::size_t latent = model.encoder.latent_dim;

    // Layer inputs recomputed from cached pre-activations.
    std::vector<std::vector<double>> inputs(head.num_layers);
    inputs[0] = cache.z;
    for (std::size_t l = 1; l < head.num_layers; ++l) {
        inputs[l].resize(head.hidden_width);
        const double* pre = cache.pre.data() + (l - 1) * head.hidden_width;
        for (std::size_t j = 0; j < head.hidden_width; ++j) inputs[l][j] = elu(pre[j]);
    }

    std::vector<double> delta = grad_theta;
    for (std::size_t l = head.num_layers; l-- > 0;) {
        const std::size_t in_dim = l == 0 ? latent : head.hidden_width;
        const std::size_t out_dim = l + 1 == head.num_layers ? head.output_dim : head.hidden_width;
        const TensorSpec& w = find_tensor(model, "head.l" + std::to_string(l) + ".w");
        const TensorSpec& b = find_tensor(model, "head.l" + std::to_string(l) + ".b");
        std::vector<double> g_in(in_dim, 0.0);
        const std::vector<double>& x = inputs[l];
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double g = delta[o];
            grad_params[b.offset + o] += g;
            if (g == 0.0) continue;
            double* grow = grad_params.data() + w.offset + o * in_dim;
            const double* wrow = model.params.data() + w.offset + o * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) {
                grow[j] += g * x[j];
                g_in[j] += g * wrow[j];
            }
        }
        if (l == 0) {
            grad_z = std::move(g_in);
        } else {
            const double* pre = cache.pre.data() + (l - 1) * head.hidden_width;
            for (std::size_t j = 0; j < in_dim; ++j) g_in[j] *= elu_grad(pre[j]);
            delta = std::move(g_in);
        }
    }
}

std::vector<double> encode(const HyperNetModel& model, const AudioBuffer& x) {
    EncodeCache cache = encode_forward(model, x.samples);
    return std::move(cache.z);
}

TargetNetParams predict_inr(const HyperNetModel& model, const AudioBuffer& x) {
    return head_forward(model, encode(model, x));
}

namespace detail {

nlohmann::json model_config_json(const HyperNetModel& model) {
    nlohmann::json config;
    config["kind"] = "model";
    config["encoder"] = {{"base_channels", model.encoder.base_channels},
                         {"strides", model.encoder.strides},
                         {"residual_dilations", model.encoder.residual_dilations},
                         {"latent_dim", model.encoder.latent_dim}};
    config["head"] = {{"hidden_width", model.head.hidden_width},
                      {"num_layers", model.head.num_layers},
                      {"output_dim", model.head.output_dim}};
    config["target"] = {{"embedding_size", model.target.embedding_size},
                        {"hidden_widths", model.target.hidden_widths}};
    config["seed"] = model.seed;
    return config;
}

HyperNetModel model_from_json(const nlohmann::json& config, std::vector<double> params) {
    HyperNetModel model;
    try {
        const nlohmann::json& e = config.at("encoder");
        model.encoder.base_channels = e.at("base_channels").get<std::size_t>();
        model.encoder.strides = e.at("strides").get<std::vector<std::size_t>>();
        model.encoder.residual_dilations =
            e.at("residual_dilations").get<std::vector<std::size_t>>();
        model.encoder.latent_dim = e.at("latent_dim").get<std::size_t>();
        const nlohmann::json& h = config.at("head");
        model.head.hidden_width = h.at("hidden_width").get<std::size_t>();
        model.head.num_layers = h.at("num_layers").get<std::size_t>();
        model.head.output_dim = h.at("output_dim").get<std::size_t>();
        const nlohmann::json& t = config.at("target");
        model.target.embedding_size = t.at("embedding_size").get<std::size_t>();
        model.target.hidden_widths = t.at("hidden_widths").get<std::vector<std::size_t>>();
        model.seed = config.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::CorruptHeader, std::string("bad checkpoint config: ") + e.what());
    }
    if (model.head.output_dim != param_count(model.target)) {
        raise(ErrorCode::DimensionMismatch, "head output does not match target parameter count");
    }
    model.layout = model_layout(model.encoder, model.head);
    const std::size_t expected = model.layout.back().offset + model.layout.back().size;
    if (params.size() != expected) {
        raise(ErrorCode::DimensionMismatch, "checkpoint payload does not match config");
    }
    model.params = std::move(params);
    return model;
}

} // namespace detail

void save_model(const HyperNetModel& model, const std::string& path) {
    detail::write_hsck(path, detail::model_config_json(model), model.params);
}

HyperNetModel load_model(const std::string& path) {
    detail::HsckFile file = detail::read_hsck(path);
    if (file.config.value("kind", "") != "model") {
        raise(ErrorCode::CorruptHeader, "checkpoint is not a plain model file");
    }
    return detail::model_from_json(file.config, std::move(file.flat));
}

} // namespace resin
