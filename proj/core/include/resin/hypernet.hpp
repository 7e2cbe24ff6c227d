#pragma once

#include "resin/audio.hpp"
#include "resin/target_net.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace resin {

// Convolutional waveform encoder. Stack: input conv (kernel 7) -> per block
// {residual units, one per dilation, kernel 3} + strided downsampling conv
// (kernel 2*stride, channels double) -> 1x1 conv to latent_dim -> mean pool
// over time. Every conv except the input conv is preceded by ELU. Residual
// unit: x + conv1x1(ELU(conv_dilated(ELU(x)))).
struct EncoderConfig {
    std::size_t base_channels = 32;
    std::vector<std::size_t> strides = {2, 4, 8, 8};
    std::vector<std::size_t> residual_dilations = {1, 3, 9};
    std::size_t latent_dim = 128;

    std::size_t min_input_length() const;
    bool operator==(const EncoderConfig&) const = default;
};

// Fully-connected head: five hidden affine+ELU layers of hidden_width, then
// an affine layer emitting the flattened target-network weights.
struct HeadConfig {
    std::size_t hidden_width = 512;
    std::size_t num_layers = 6;
    std::size_t output_dim = 0; // filled from the target config at build time

    bool operator==(const HeadConfig&) const = default;
};

// One named parameter tensor inside the flat model vector.
struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t fan_in = 0;
};

struct HyperNetModel {
    EncoderConfig encoder;
    HeadConfig head;
    TargetNetConfig target;
    std::uint64_t seed = 0;
    std::vector<double> params;     // all tensors concatenated
    std::vector<TensorSpec> layout; // declaration order
};

// Tensor layout implied by the configs, in checkpoint declaration order.
std::vector<TensorSpec> model_layout(const EncoderConfig& encoder, const HeadConfig& head);
std::size_t model_param_count(const EncoderConfig& encoder, const HeadConfig& head);

// Weights and biases drawn from uniform(-1/sqrt(fan_in), +1/sqrt(fan_in));
// the final head layer is scaled by 0.01 so the initial theta is near zero.
// head.output_dim, if zero, is filled from param_count(target); a nonzero
// mismatch raises DimensionMismatch.
HyperNetModel init_model(std::uint64_t seed, const EncoderConfig& encoder,
                         const HeadConfig& head, const TargetNetConfig& target);

std::vector<double> encode(const HyperNetModel& model, const AudioBuffer& x);
TargetNetParams head_forward(const HyperNetModel& model, const std::vector<double>& z);
TargetNetParams predict_inr(const HyperNetModel& model, const AudioBuffer& x);

// Checkpoint file: magic "HSCK", version u32 LE, length-prefixed JSON config
// block, then all tensors as float32 LE in declaration order.
void save_model(const HyperNetModel& model, const std::string& path);
HyperNetModel load_model(const std::string& path);

// --- pieces shared with the trainer ---

// All intermediate activations of one encode pass. Buffers are channel-major
// [channels x time]; pre-activation values are kept for the ELU backward.
struct EncodeCache {
    struct ResidualCache {
        std::vector<double> in;   // unit input
        std::vector<double> elu1; // ELU(in)
        std::vector<double> h;    // dilated conv output, pre-ELU
        std::vector<double> elu2; // ELU(h)
    };
    struct BlockCache {
        std::vector<ResidualCache> res;
        std::vector<double> res_out;  // after the skip sums
        std::vector<double> elu_down; // ELU(res_out), input of the strided conv
        std::size_t t_in = 0;
        std::size_t t_out = 0;
    };
    std::vector<double> input; // raw samples
    std::vector<BlockCache> blocks;
    std::vector<double> trunk;      // last block output
    std::vector<double> elu_latent; // ELU(trunk)
    std::vector<double> latent_seq; // [latent_dim x t_final]
    std::vector<double> z;          // pooled latent
    std::size_t t_final = 0;
};

EncodeCache encode_forward(const HyperNetModel& model, const std::vector<double>& samples);

// Accumulates d(loss)/d(encoder params) into grad_params (same length as
// model.params; head region untouched) given d(loss)/dz.
void encode_backward(const HyperNetModel& model, const EncodeCache& cache,
                     const std::vector<double>& grad_z, std::vector<double>& grad_params);

struct HeadCache {
    std::vector<double> z;
    std::vector<double> pre; // per layer pre-activations, concatenated
    std::vector<double> theta;
};

HeadCache head_forward_cache(const HyperNetModel& model, const std::vector<double>& z);

// Accumulates d(loss)/d(head params) into grad_params and writes
// d(loss)/dz into grad_z (overwritten, length latent_dim).
void head_backward(const HyperNetModel& model, const HeadCache& cache,
                   const std::vector<double>& grad_theta, std::vector<double>& grad_params,
                   std::vector<double>& grad_z);

} // namespace resin
