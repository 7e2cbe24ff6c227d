#pragma once

#include "resin/dataset.hpp"
#include "resin/hypernet.hpp"
#include "resin/loss.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace resin {

struct OptimizerState {
    std::size_t step = 0; // completed update count
    std::vector<double> m;
    std::vector<double> v;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct TrainConfig {
    std::size_t total_steps = 1;
    std::size_t batch_size = 16;
    LossConfig loss;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0; // 0 disables periodic checkpoints
    std::size_t log_every = 100;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double grad_clip = 0.0; // global L2 cap, 0 disables
    AugmentConfig augment;  // augment.seed is overridden by seed
};

struct TrainLogEntry {
    std::size_t step = 0;
    double total = 0.0;
    double sl1 = 0.0;
    double stft = 0.0;
    double wall_time_s = 0.0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
};

struct BatchGrads {
    double loss = 0.0;
    LossParts parts;
    std::vector<double> grads; // d(mean batch loss)/d(model.params)
};

// Mean over the batch of total_loss(x, render(predict_inr(x))) on each
// example's native grid, with exact reverse-mode gradients for every model
// parameter. Raises NonFiniteLoss if any part is NaN or infinite.
BatchGrads loss_and_grads(const HyperNetModel& model, const std::vector<AudioBuffer>& batch,
                          const LossConfig& loss);

OptimizerState init_optimizer(const TrainConfig& config, std::size_t num_params);

// Decoupled weight decay update with bias-corrected moments:
// theta -= lr * mhat / (sqrt(vhat) + eps) + lr * wd * theta.
void adamw_step(OptimizerState& state, std::vector<double>& params,
                const std::vector<double>& grads);

struct TrainResult {
    HyperNetModel model;
    OptimizerState opt;
    TrainLog log;
    std::string last_checkpoint; // empty when checkpointing is off
};

// Runs steps [opt.step, total_steps): make_batch -> loss_and_grads ->
// adamw_step. Parameters and moments are snapped to the float32 grid after
// every update so checkpoints are lossless and resumed runs replay the
// uninterrupted trajectory bit for bit. Batches derive from (seed, global
// example index), making the whole run a pure function of its inputs.
// out_dir receives ckpt_<steps>.hsck files; pass "" to disable writing.
TrainResult train(HyperNetModel model, OptimizerState opt, const DatasetManifest& data,
                  const TrainConfig& config, const std::string& out_dir);

// CSV: "step,total_loss,sl1,stft,wall_time"
void write_train_log(const TrainLog& log, const std::string& path);

void save_checkpoint(const HyperNetModel& model, const OptimizerState& opt,
                     const std::string& path);

struct TrainerCheckpoint {
    HyperNetModel model;
    OptimizerState opt;
};

TrainerCheckpoint load_checkpoint(const std::string& path);

// Accepts either a plain model file or a trainer checkpoint.
HyperNetModel load_model_any(const std::string& path);

struct GradCheckReport {
    std::string component;
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    bool passed = false;
};

// Compares reverse-mode gradients against central finite differences
// (h = 1e-5) on small fixtures; passes iff the max relative error, with an
// absolute floor of 1e-8 on denominators, stays below 1e-4. Components:
// target, head, encoder, loss, end2end.
GradCheckReport gradcheck(const std::string& component, std::uint64_t seed);

} // namespace resin
