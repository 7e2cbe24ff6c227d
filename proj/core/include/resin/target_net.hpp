#pragma once

#include "resin/audio.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace resin {

// Architecture of the per-signal coordinate network: sinusoidal embedding
// of size L (2L features), ReLU hidden layers, one linear output unit.
struct TargetNetConfig {
    std::size_t embedding_size = 16;               // L
    std::vector<std::size_t> hidden_widths = {256, 256, 256, 256};

    std::size_t input_dim() const { return 2 * embedding_size; }
    bool operator==(const TargetNetConfig&) const = default;
};

// Flat weight vector for a TargetNetConfig. Layout per layer: weight matrix
// row-major [out x in], then bias [out]; layers concatenated input to output.
struct TargetNetParams {
    TargetNetConfig config;
    std::vector<double> theta;
};

// Time coordinates in [0, 1] with the sampling rate they correspond to.
struct CoordinateGrid {
    std::vector<double> times;
    int nominal_rate = 0;
};

// Embedding vector [sin(2^0 pi t), cos(2^0 pi t), ..., sin(2^{L-1} pi t),
// cos(2^{L-1} pi t)], written into out (length 2L).
void positional_embedding(double t, std::size_t embedding_size, double* out);
std::vector<double> positional_embedding(double t, std::size_t embedding_size);

// Total parameter count: sum over layers of in*out + out.
std::size_t param_count(const TargetNetConfig& config);

// Evaluates the network at a single coordinate. t outside [0, 1] is
// permitted (extrapolation).
double forward(const TargetNetParams& params, double t);

// Element-wise forward over the grid; output sample rate is the grid's
// nominal rate.
AudioBuffer render(const TargetNetParams& params, const CoordinateGrid& grid);

// times[i] = i / (num_samples - 1), spanning [0, 1] inclusive.
CoordinateGrid make_grid(std::size_t num_samples, int rate);

// Grid size when retargeting a source of num_samples at source_rate to
// target_rate: round(num_samples * target_rate / source_rate).
std::size_t retargeted_sample_count(std::size_t num_samples, int source_rate, int target_rate);

// INR weight file: magic "HSIR", version u32 LE, L u32 LE, hidden layer
// count u32 LE, widths u32 LE each, theta as float32 LE in layout order.
std::vector<std::uint8_t> serialize_params(const TargetNetParams& params);
TargetNetParams deserialize_params(const std::vector<std::uint8_t>& bytes);
void save_params(const TargetNetParams& params, const std::string& path);
TargetNetParams load_params(const std::string& path);

// --- pieces shared with the trainer ---

// Forward over a grid keeping hidden pre-activations for the backward pass.
struct TargetForwardCache {
    std::vector<double> embeddings; // points x 2L
    std::vector<double> hidden;     // per layer: points x width, pre-activation
    std::vector<double> output;     // points
};

TargetForwardCache forward_batch(const TargetNetParams& params,
                                 const std::vector<double>& times);

// d(loss)/d(theta) given d(loss)/d(output) per grid point; accumulates into
// grad_theta (length param_count).
void backward_batch(const TargetNetParams& params, const std::vector<double>& times,
                    const TargetForwardCache& cache, const std::vector<double>& grad_output,
                    std::vector<double>& grad_theta);

} // namespace resin
