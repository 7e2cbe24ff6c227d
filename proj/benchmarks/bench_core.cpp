#include "resin/audio.hpp"
#include "resin/hypernet.hpp"
#include "resin/loss.hpp"
#include "resin/target_net.hpp"
#include "resin/trainer.hpp"

#include <benchmark/benchmark.h>

#include <cstddef>
#include <random>
#include <vector>

namespace {

resin::AudioBuffer noise(std::size_t n, int rate, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    resin::AudioBuffer x;
    x.sample_rate = rate;
    x.samples.resize(n);
    for (double& s : x.samples) s = dist(rng);
    return x;
}

// Desk-scale model, the same shape the CLI preset trains.
resin::HyperNetModel desk_model() {
    resin::EncoderConfig enc;
    enc.base_channels = 4;
    enc.strides = {4, 4, 8};
    enc.residual_dilations = {1, 3, 9};
    enc.latent_dim = 16;
    resin::HeadConfig head;
    head.hidden_width = 32;
    resin::TargetNetConfig target{8, {8, 8}};
    return resin::init_model(0, enc, head, target);
}

resin::LossConfig desk_loss() {
    resin::LossConfig loss;
    loss.resolutions = {{128, 16, 0}, {256, 32, 0}};
    return loss;
}

void BM_Stft(benchmark::State& state) {
    const auto fft = static_cast<std::size_t>(state.range(0));
    const resin::AudioBuffer x = noise(2048, 16000, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::stft(x, fft, fft / 8));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_Stft)->Arg(128)->Arg(1024);

void BM_BuildMelFilterbank(benchmark::State& state) {
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::build_mel_filterbank(128, 1024, 22050, 0.0, 11025.0));
    }
}
BENCHMARK(BM_BuildMelFilterbank);

void BM_SincResample(benchmark::State& state) {
    const resin::AudioBuffer x = noise(2048, 16000, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::sinc_resample(x, 22050));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}
BENCHMARK(BM_SincResample);

void BM_RenderTarget(benchmark::State& state) {
    const resin::TargetNetConfig config{static_cast<std::size_t>(state.range(0)),
                                        std::vector<std::size_t>(
                                            static_cast<std::size_t>(state.range(1)),
                                            static_cast<std::size_t>(state.range(2)))};
    resin::TargetNetParams params{config, {}};
    params.theta = noise(resin::param_count(config), 0, 3).samples;
    const resin::CoordinateGrid grid = resin::make_grid(2048, 16000);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::render(params, grid));
    }
    state.SetItemsProcessed(state.iterations() * 2048);
}
BENCHMARK(BM_RenderTarget)->Args({8, 2, 8})->Args({16, 4, 256});

void BM_Encode(benchmark::State& state) {
    const resin::HyperNetModel model = desk_model();
    const resin::AudioBuffer x = noise(2048, 16000, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::encode(model, x));
    }
}
BENCHMARK(BM_Encode);

void BM_PredictInr(benchmark::State& state) {
    const resin::HyperNetModel model = desk_model();
    const resin::AudioBuffer x = noise(2048, 16000, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::predict_inr(model, x));
    }
}
BENCHMARK(BM_PredictInr);

void BM_TotalLoss(benchmark::State& state) {
    const resin::AudioBuffer x = noise(2048, 16000, 6);
    const resin::AudioBuffer y = noise(2048, 16000, 7);
    const resin::LossConfig loss = desk_loss();
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::total_loss(x, y, loss));
    }
}
BENCHMARK(BM_TotalLoss);

void BM_AdamwStep(benchmark::State& state) {
    const resin::HyperNetModel model = desk_model();
    resin::TrainConfig config;
    resin::OptimizerState opt = resin::init_optimizer(config, model.params.size());
    std::vector<double> params = model.params;
    const std::vector<double> grads = noise(params.size(), 0, 8).samples;
    for (auto _ : state) {
        resin::adamw_step(opt, params, grads);
        benchmark::DoNotOptimize(params.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(params.size()));
}
BENCHMARK(BM_AdamwStep);

// Forward and backward through encoder, head, renderer, and loss: the bulk
// of one training step at the desk preset's batch size.
void BM_LossAndGrads(benchmark::State& state) {
    const resin::HyperNetModel model = desk_model();
    std::vector<resin::AudioBuffer> batch;
    for (std::uint64_t i = 0; i < 4; ++i) batch.push_back(noise(2048, 16000, 10 + i));
    const resin::LossConfig loss = desk_loss();
    for (auto _ : state) {
        benchmark::DoNotOptimize(resin::loss_and_grads(model, batch, loss));
    }
}
BENCHMARK(BM_LossAndGrads);

} // namespace

BENCHMARK_MAIN();
