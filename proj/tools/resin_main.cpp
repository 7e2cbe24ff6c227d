#include <CLI11.hpp>
#include <json.hpp>

#include <resin/audio.hpp>
#include <resin/dataset.hpp>
#include <resin/errors.hpp>
#include <resin/hypernet.hpp>
#include <resin/loss.hpp>
#include <resin/metrics.hpp>
#include <resin/target_net.hpp>
#include <resin/trainer.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flag and config-file problems exit with 2, I/O failures with 1, training
// divergence with 3; everything the library classifies as a contract
// violation on its inputs counts as a config problem.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(const resin::Error& e) {
    switch (e.code()) {
        case resin::ErrorCode::NonFiniteLoss:
            return 3;
        case resin::ErrorCode::IoError:
        case resin::ErrorCode::CheckpointIoError:
        case resin::ErrorCode::UnreadableFile:
            return 1;
        default:
            return 2;
    }
}

struct TrainSettings {
    std::string data;
    std::string out;
    std::size_t steps = 5000;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    double grad_clip = 0.0;
    std::size_t checkpoint_every = 0; // 0 keeps only the final checkpoint
    std::size_t log_every = 100;
    std::size_t crop_length = 32768;
    int target_rate = 22050;
    std::size_t val_speakers = 1;
    std::size_t base_channels = 32;
    std::vector<std::size_t> strides = {2, 4, 8, 8};
    std::vector<std::size_t> residual_dilations = {1, 3, 9};
    std::size_t latent_dim = 128;
    std::size_t head_width = 512;
    std::size_t embedding_size = 16;
    std::vector<std::size_t> hidden_widths = {256, 256, 256, 256};
    resin::LossConfig loss = resin::loss_preset("l1_melstft");
    bool augment_crop = true;
    bool phase_mangle_on = true;
    double phase_f_min = 20.0;
    double phase_f_max = 2000.0;
    bool dequantize_on = true;
    double dequantize_lsb = 1.0 / 32768.0;
    int threads = 0;
};

// Small model and short crops so a full run finishes on a laptop CPU in
// minutes while exercising the exact same code paths as the full setup.
void apply_preset(TrainSettings& s, const std::string& name) {
    if (name != "desk") throw ConfigError("unknown preset: " + name);
    s.steps = 5000;
    s.batch_size = 4;
    s.lr = 1e-3;
    s.checkpoint_every = 1000;
    s.log_every = 50;
    s.crop_length = 2048;
    s.target_rate = 16000;
    s.base_channels = 4;
    s.strides = {4, 4, 8};
    s.residual_dilations = {1, 3, 9};
    s.latent_dim = 16;
    s.head_width = 32;
    s.embedding_size = 8;
    s.hidden_widths = {8, 8};
    resin::LossConfig loss;
    loss.resolutions = {{128, 16, 0}, {256, 32, 0}};
    s.loss = loss;
}

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for config key \"" + key + "\"");
    }
}

void apply_config_key(TrainSettings& s, const std::string& key, const json& v) {
    if (key == "data") s.data = get_as<std::string>(v, key);
    else if (key == "out") s.out = get_as<std::string>(v, key);
    else if (key == "steps") s.steps = get_as<std::size_t>(v, key);
    else if (key == "batch_size") s.batch_size = get_as<std::size_t>(v, key);
    else if (key == "seed") s.seed = get_as<std::uint64_t>(v, key);
    else if (key == "lr") s.lr = get_as<double>(v, key);
    else if (key == "beta1") s.beta1 = get_as<double>(v, key);
    else if (key == "beta2") s.beta2 = get_as<double>(v, key);
    else if (key == "eps") s.eps = get_as<double>(v, key);
    else if (key == "weight_decay") s.weight_decay = get_as<double>(v, key);
    else if (key == "grad_clip") s.grad_clip = get_as<double>(v, key);
    else if (key == "checkpoint_every") s.checkpoint_every = get_as<std::size_t>(v, key);
    else if (key == "log_every") s.log_every = get_as<std::size_t>(v, key);
    else if (key == "crop_length") s.crop_length = get_as<std::size_t>(v, key);
    else if (key == "target_rate") s.target_rate = get_as<int>(v, key);
    else if (key == "val_speakers") s.val_speakers = get_as<std::size_t>(v, key);
    else if (key == "base_channels") s.base_channels = get_as<std::size_t>(v, key);
    else if (key == "strides") s.strides = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "residual_dilations")
        s.residual_dilations = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "latent_dim") s.latent_dim = get_as<std::size_t>(v, key);
    else if (key == "head_width") s.head_width = get_as<std::size_t>(v, key);
    else if (key == "embedding_size") s.embedding_size = get_as<std::size_t>(v, key);
    else if (key == "hidden_widths") s.hidden_widths = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "lambda_sl1") s.loss.lambda_sl1 = get_as<double>(v, key);
    else if (key == "lambda_stft") s.loss.lambda_stft = get_as<double>(v, key);
    else if (key == "sl1_beta") s.loss.beta = get_as<double>(v, key);
    else if (key == "log_epsilon") s.loss.log_epsilon = get_as<double>(v, key);
    else if (key == "stft_resolutions") {
        if (!v.is_array() || v.empty()) {
            throw ConfigError("stft_resolutions must be a non-empty array");
        }
        std::vector<resin::StftResolution> resolutions;
        for (const json& r : v) {
            if (!r.is_array() || r.size() < 2 || r.size() > 3) {
                throw ConfigError("each stft resolution is [fft, hop] or [fft, hop, win]");
            }
            resin::StftResolution res;
            res.fft_size = get_as<std::size_t>(r[0], key);
            res.hop = get_as<std::size_t>(r[1], key);
            res.win = r.size() == 3 ? get_as<std::size_t>(r[2], key) : 0;
            resolutions.push_back(res);
        }
        s.loss.resolutions = std::move(resolutions);
    } else if (key == "mel_bins") {
        const std::size_t bins = get_as<std::size_t>(v, key);
        if (bins == 0) {
            s.loss.mel.reset();
        } else {
            if (!s.loss.mel) s.loss.mel.emplace();
            s.loss.mel->mel_bins = bins;
        }
    } else if (key == "mel_f_min") {
        if (!s.loss.mel) s.loss.mel.emplace();
        s.loss.mel->f_min = get_as<double>(v, key);
    } else if (key == "mel_f_max") {
        if (!s.loss.mel) s.loss.mel.emplace();
        s.loss.mel->f_max = get_as<double>(v, key);
    } else if (key == "augment_crop") s.augment_crop = get_as<bool>(v, key);
    else if (key == "phase_mangle") s.phase_mangle_on = get_as<bool>(v, key);
    else if (key == "phase_f_min") s.phase_f_min = get_as<double>(v, key);
    else if (key == "phase_f_max") s.phase_f_max = get_as<double>(v, key);
    else if (key == "dequantize") s.dequantize_on = get_as<bool>(v, key);
    else if (key == "dequantize_lsb") s.dequantize_lsb = get_as<double>(v, key);
    else if (key == "threads") s.threads = get_as<int>(v, key);
    else throw ConfigError("unknown config key: " + key);
}

void apply_config_file(TrainSettings& s, const std::string& path) {
    std::ifstream f(path);
    if (!f) resin::raise(resin::ErrorCode::IoError, "cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    // Sugar that expands into the explicit loss keys, so it must run before
    // any of them regardless of key order in the file.
    if (j.contains("loss_preset")) {
        s.loss = resin::loss_preset(get_as<std::string>(j["loss_preset"], "loss_preset"));
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "loss_preset") continue;
        apply_config_key(s, key, value);
    }
}

// The resolved form only uses explicit keys, so feeding it back through
// --config reproduces the run without depending on preset definitions.
json resolved_config(const TrainSettings& s, std::size_t effective_checkpoint_every) {
    json resolutions = json::array();
    for (const resin::StftResolution& r : s.loss.resolutions) {
        resolutions.push_back({r.fft_size, r.hop, r.win});
    }
    json j{{"data", s.data},
           {"out", s.out},
           {"steps", s.steps},
           {"batch_size", s.batch_size},
           {"seed", s.seed},
           {"lr", s.lr},
           {"beta1", s.beta1},
           {"beta2", s.beta2},
           {"eps", s.eps},
           {"weight_decay", s.weight_decay},
           {"grad_clip", s.grad_clip},
           {"checkpoint_every", effective_checkpoint_every},
           {"log_every", s.log_every},
           {"crop_length", s.crop_length},
           {"target_rate", s.target_rate},
           {"val_speakers", s.val_speakers},
           {"base_channels", s.base_channels},
           {"strides", s.strides},
           {"residual_dilations", s.residual_dilations},
           {"latent_dim", s.latent_dim},
           {"head_width", s.head_width},
           {"embedding_size", s.embedding_size},
           {"hidden_widths", s.hidden_widths},
           {"lambda_sl1", s.loss.lambda_sl1},
           {"lambda_stft", s.loss.lambda_stft},
           {"sl1_beta", s.loss.beta},
           {"log_epsilon", s.loss.log_epsilon},
           {"stft_resolutions", resolutions},
           {"mel_bins", s.loss.mel ? s.loss.mel->mel_bins : 0},
           {"augment_crop", s.augment_crop},
           {"phase_mangle", s.phase_mangle_on},
           {"phase_f_min", s.phase_f_min},
           {"phase_f_max", s.phase_f_max},
           {"dequantize", s.dequantize_on},
           {"dequantize_lsb", s.dequantize_lsb},
           {"threads", s.threads}};
    if (s.loss.mel) {
        j["mel_f_min"] = s.loss.mel->f_min;
        j["mel_f_max"] = s.loss.mel->f_max;
    }
    return j;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) resin::raise(resin::ErrorCode::IoError, "cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) resin::raise(resin::ErrorCode::IoError, "short write to " + path);
}

int run_train(const TrainSettings& s) {
    if (s.data.empty()) throw ConfigError("missing --data (dataset root directory)");
    if (s.out.empty()) throw ConfigError("missing --out (run output directory)");
    if (s.steps == 0) throw ConfigError("--steps must be at least 1");
    const std::size_t ckpt_every = s.checkpoint_every == 0 ? s.steps : s.checkpoint_every;

    std::error_code ec;
    fs::create_directories(s.out, ec);
    if (ec) resin::raise(resin::ErrorCode::IoError, "cannot create " + s.out);
    write_json_file(resolved_config(s, ckpt_every), (fs::path(s.out) / "config.json").string());

    const resin::ManifestPair pair =
        resin::build_manifest(s.data, s.crop_length, s.target_rate, s.val_speakers);
    resin::save_manifest(pair.train, (fs::path(s.out) / "train_manifest.json").string());
    resin::save_manifest(pair.val, (fs::path(s.out) / "val_manifest.json").string());

    resin::EncoderConfig enc;
    enc.base_channels = s.base_channels;
    enc.strides = s.strides;
    enc.residual_dilations = s.residual_dilations;
    enc.latent_dim = s.latent_dim;
    resin::HeadConfig head;
    head.hidden_width = s.head_width;
    resin::TargetNetConfig target;
    target.embedding_size = s.embedding_size;
    target.hidden_widths = s.hidden_widths;

    resin::TrainConfig tc;
    tc.total_steps = s.steps;
    tc.batch_size = s.batch_size;
    tc.loss = s.loss;
    tc.seed = s.seed;
    tc.checkpoint_every = 0; // cadence handled here so logging can stay live
    tc.log_every = s.log_every;
    tc.lr = s.lr;
    tc.beta1 = s.beta1;
    tc.beta2 = s.beta2;
    tc.eps = s.eps;
    tc.weight_decay = s.weight_decay;
    tc.grad_clip = s.grad_clip;
    tc.augment.crop = s.augment_crop;
    tc.augment.phase_mangle.enabled = s.phase_mangle_on;
    tc.augment.phase_mangle.f_min = s.phase_f_min;
    tc.augment.phase_mangle.f_max = s.phase_f_max;
    tc.augment.dequantize.enabled = s.dequantize_on;
    tc.augment.dequantize.lsb = s.dequantize_lsb;

    resin::HyperNetModel model = resin::init_model(s.seed, enc, head, target);
    resin::OptimizerState opt = resin::init_optimizer(tc, model.params.size());
    std::printf("event=start steps=%zu batch_size=%zu model_params=%zu train_files=%zu "
                "val_files=%zu skipped_unreadable=%zu\n",
                s.steps, s.batch_size, model.params.size(), pair.train.entries.size(),
                pair.val.entries.size(), pair.unreadable_skipped);
    std::fflush(stdout);

    resin::TrainLog master;
    std::string last_checkpoint;
    const std::string csv_path = (fs::path(s.out) / "train_log.csv").string();
    const auto t0 = std::chrono::steady_clock::now();
    try {
        while (opt.step < s.steps) {
            resin::TrainConfig chunk = tc;
            chunk.total_steps = std::min(opt.step + s.log_every, s.steps);
            const double offset =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            resin::TrainResult r =
                resin::train(std::move(model), std::move(opt), pair.train, chunk, "");
            model = std::move(r.model);
            opt = std::move(r.opt);
            for (resin::TrainLogEntry entry : r.log.entries) {
                entry.wall_time_s += offset;
                master.entries.push_back(entry);
                std::printf("step=%zu loss=%.9g sl1=%.9g stft=%.9g wall=%.3f\n", entry.step,
                            entry.total, entry.sl1, entry.stft, entry.wall_time_s);
            }
            if (opt.step % ckpt_every == 0 || opt.step == s.steps) {
                char name[64];
                std::snprintf(name, sizeof name, "ckpt_%06zu.hsck", opt.step);
                const std::string path = (fs::path(s.out) / name).string();
                resin::save_checkpoint(model, opt, path);
                last_checkpoint = path;
                std::printf("event=checkpoint step=%zu path=%s\n", opt.step, path.c_str());
            }
            std::fflush(stdout);
        }
    } catch (const resin::Error& e) {
        if (e.code() != resin::ErrorCode::NonFiniteLoss) throw;
        resin::write_train_log(master, csv_path);
        // The library ran with checkpoints off, so rebuild its message around
        // the checkpoints written here.
        std::string detail = e.what();
        const std::size_t at = detail.find("diverged at step ");
        std::string step_text = "?";
        if (at != std::string::npos) {
            const std::size_t begin = at + std::string("diverged at step ").size();
            std::size_t end = begin;
            while (end < detail.size() && std::isdigit(static_cast<unsigned char>(detail[end]))) {
                ++end;
            }
            step_text = detail.substr(begin, end - begin);
        }
        std::printf("event=diverged step=%s last_checkpoint=%s\n", step_text.c_str(),
                    last_checkpoint.empty() ? "none" : last_checkpoint.c_str());
        std::fflush(stdout);
        resin::raise(resin::ErrorCode::NonFiniteLoss,
                     "training diverged at step " + step_text +
                         (last_checkpoint.empty() ? std::string(", no checkpoint written")
                                                  : ", last good checkpoint: " + last_checkpoint));
    }
    resin::write_train_log(master, csv_path);
    const double final_loss = master.entries.empty() ? 0.0 : master.entries.back().total;
    std::printf("event=end steps=%zu final_loss=%.9g last_checkpoint=%s log=%s\n", opt.step,
                final_loss, last_checkpoint.c_str(), csv_path.c_str());
    return 0;
}

int run_encode(const std::string& ckpt, const std::string& in, const std::string& out) {
    const resin::HyperNetModel model = resin::load_model_any(ckpt);
    const resin::AudioBuffer x = resin::read_wav(in);
    const resin::TargetNetParams theta = resin::predict_inr(model, x);
    resin::save_params(theta, out);
    std::printf("event=encode params=%zu embedding_size=%zu input_samples=%zu out=%s\n",
                theta.theta.size(), theta.config.embedding_size, x.samples.size(), out.c_str());
    return 0;
}

int run_render(const std::string& inr, int rate, std::size_t samples, const std::string& out,
               bool pcm16) {
    const resin::TargetNetParams theta = resin::load_params(inr);
    const resin::AudioBuffer y = resin::render(theta, resin::make_grid(samples, rate));
    resin::write_wav(y, out, pcm16 ? resin::WavEncoding::Pcm16 : resin::WavEncoding::Float32);
    std::printf("event=render samples=%zu rate=%d out=%s\n", y.samples.size(), y.sample_rate,
                out.c_str());
    return 0;
}

int run_resample(const std::string& ckpt, const std::string& in, int rate, const std::string& out,
                 bool pcm16) {
    const resin::HyperNetModel model = resin::load_model_any(ckpt);
    const resin::AudioBuffer x = resin::read_wav(in);
    const std::size_t n = resin::retargeted_sample_count(x.samples.size(), x.sample_rate, rate);
    const resin::TargetNetParams theta = resin::predict_inr(model, x);
    const resin::AudioBuffer y = resin::render(theta, resin::make_grid(n, rate));
    resin::write_wav(y, out, pcm16 ? resin::WavEncoding::Pcm16 : resin::WavEncoding::Float32);
    std::printf("event=resample rate_in=%d rate_out=%d samples_in=%zu samples_out=%zu out=%s\n",
                x.sample_rate, rate, x.samples.size(), y.samples.size(), out.c_str());
    return 0;
}

bool looks_like_resample_cache(const fs::path& p) {
    const std::string stem = p.stem().string();
    const std::size_t dot = stem.rfind('.');
    if (dot == std::string::npos || dot + 1 == stem.size()) return false;
    return std::all_of(stem.begin() + static_cast<std::ptrdiff_t>(dot) + 1, stem.end(),
                       [](unsigned char c) { return std::isdigit(c) != 0; });
}

// Rate of the first original WAV in speaker order, mirroring the manifest
// scan so "evaluate at the data's own rate" needs no flag.
int detect_ingest_rate(const std::string& root) {
    if (!fs::is_directory(root)) {
        resin::raise(resin::ErrorCode::EmptyDataset, "no such dataset root: " + root);
    }
    std::vector<fs::path> dirs;
    for (const fs::directory_entry& d : fs::directory_iterator(root)) {
        if (d.is_directory()) dirs.push_back(d.path());
    }
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& dir : dirs) {
        std::vector<fs::path> files;
        for (const fs::directory_entry& f : fs::directory_iterator(dir)) {
            if (!f.is_regular_file()) continue;
            std::string ext = f.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext != ".wav" || looks_like_resample_cache(f.path())) continue;
            files.push_back(f.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            try {
                return resin::read_wav(f.string()).sample_rate;
            } catch (const resin::Error&) {
                continue;
            }
        }
    }
    resin::raise(resin::ErrorCode::EmptyDataset, "no readable WAV files under " + root);
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& rates_csv,
             const std::string& out, int ingest_rate, int threads) {
    std::vector<int> rates;
    std::size_t begin = 0;
    while (begin <= rates_csv.size()) {
        const std::size_t comma = std::min(rates_csv.find(',', begin), rates_csv.size());
        const std::string token = rates_csv.substr(begin, comma - begin);
        begin = comma + 1;
        if (token.empty()) continue;
        int value = 0;
        try {
            std::size_t used = 0;
            value = std::stoi(token, &used);
            if (used != token.size()) value = 0;
        } catch (const std::exception&) {
            value = 0;
        }
        if (value <= 0) throw ConfigError("bad rate in --rates: \"" + token + "\"");
        rates.push_back(value);
    }
    if (rates.empty()) throw ConfigError("--rates must list at least one rate");

    const resin::HyperNetModel model = resin::load_model_any(ckpt);
    const int ingest = ingest_rate > 0 ? ingest_rate : detect_ingest_rate(data);
    const resin::DatasetManifest manifest = resin::build_manifest(data, 1, ingest, 0).train;

    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) resin::raise(resin::ErrorCode::IoError, "cannot create " + out);
    write_json_file(json{{"ckpt", ckpt},
                         {"data", data},
                         {"out", out},
                         {"rates", rates},
                         {"ingest_rate", ingest},
                         {"threads", threads}},
                    (fs::path(out) / "eval_config.json").string());

    std::printf("event=start files=%zu ingest_rate=%d rates=%zu\n", manifest.entries.size(),
                ingest, rates.size());
    for (const int rate : rates) {
        const resin::MetricReport report = resin::evaluate_set(model, manifest, rate);
        const std::string base = (fs::path(out) / ("metrics_" + std::to_string(rate))).string();
        resin::write_report_csv(report, base + ".csv");
        resin::write_report_json(report, base + ".json");
        std::printf("rate=%d items=%zu failures=%zu mean_mse=%.9g mean_lsd=%.9g "
                    "mean_si_snr_db=%.9g si_snr_excluded=%zu report=%s\n",
                    rate, report.per_sample.size(), report.failures.size(), report.mean_mse,
                    report.mean_lsd, report.mean_si_snr_db, report.si_snr_excluded,
                    (base + ".csv").c_str());
        std::fflush(stdout);
    }
    return 0;
}

int run_gradcheck(const std::string& component, std::uint64_t seed) {
    std::vector<std::string> components;
    if (component == "all") {
        components = {"target", "head", "encoder", "loss", "end2end"};
    } else {
        components = {component};
    }
    bool all_passed = true;
    for (const std::string& name : components) {
        const resin::GradCheckReport report = resin::gradcheck(name, seed);
        std::printf("component=%s max_rel_error=%.9g coords=%zu passed=%d\n",
                    report.component.c_str(), report.max_rel_error, report.coords_checked,
                    report.passed ? 1 : 0);
        all_passed = all_passed && report.passed;
    }
    return all_passed ? 0 : 1;
}

int run_spectrogram(const std::string& in, std::size_t fft, std::size_t hop,
                    const std::string& out) {
    if (fft == 0) throw ConfigError("--fft must be positive");
    const std::size_t effective_hop = hop == 0 ? std::max<std::size_t>(fft / 4, 1) : hop;
    const resin::AudioBuffer x = resin::read_wav(in);
    const resin::Spectrogram spec = resin::stft(x, fft, effective_hop);
    resin::write_spectrogram_csv(spec, out);
    std::printf("event=spectrogram frames=%zu bins=%zu fft=%zu hop=%zu out=%s\n", spec.frames,
                spec.bins, fft, effective_hop, out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-to-INR toolkit: trains a hypernetwork that maps waveforms to the "
                 "weights of small coordinate networks, then renders them on any grid"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand(
        "train", "Train a model on a directory of per-speaker WAV folders");
    std::string config_path;
    std::string preset;
    TrainSettings cli_values;
    train->add_option("--config", config_path, "JSON config file with flat keys");
    train->add_option("--preset", preset, "named starting point (desk)");
    train->add_option("--data", cli_values.data, "dataset root, one subdirectory per speaker");
    train->add_option("--out", cli_values.out, "output directory for checkpoints and logs");
    train->add_option("--steps", cli_values.steps, "total optimizer steps");
    train->add_option("--seed", cli_values.seed, "run seed");
    train->add_option("--batch-size", cli_values.batch_size, "examples per step");
    train->add_option("--lr", cli_values.lr, "learning rate");
    train->add_option("--crop", cli_values.crop_length, "training crop length in samples");
    train->add_option("--rate", cli_values.target_rate, "dataset ingestion rate in Hz");
    train->add_option("--val-speakers", cli_values.val_speakers, "speakers held out for validation");
    train->add_option("--checkpoint-every", cli_values.checkpoint_every,
                      "checkpoint cadence in steps, 0 keeps only the final one");
    train->add_option("--log-every", cli_values.log_every, "logging cadence in steps");
    train->add_option("--threads", cli_values.threads, "worker cap, 0 picks automatically");

    // encode
    auto* encode = app.add_subcommand("encode", "Predict INR weights for one WAV file");
    std::string enc_ckpt, enc_in, enc_out;
    encode->add_option("--ckpt", enc_ckpt, "model or trainer checkpoint")->required();
    encode->add_option("--in", enc_in, "input WAV")->required();
    encode->add_option("--out", enc_out, "output INR weight file")->required();

    // render
    auto* render = app.add_subcommand("render", "Evaluate an INR weight file on a sample grid");
    std::string ren_inr, ren_out;
    int ren_rate = 0;
    std::size_t ren_samples = 0;
    bool ren_pcm16 = false;
    render->add_option("--inr", ren_inr, "INR weight file")->required();
    render->add_option("--rate", ren_rate, "output sample rate in Hz")->required();
    render->add_option("--samples", ren_samples, "number of output samples")->required();
    render->add_option("--out", ren_out, "output WAV")->required();
    render->add_flag("--pcm16", ren_pcm16, "write 16-bit PCM instead of float32");

    // resample
    auto* resample = app.add_subcommand(
        "resample", "Encode a WAV and render it at another rate, keeping its duration");
    std::string res_ckpt, res_in, res_out;
    int res_rate = 0;
    bool res_pcm16 = false;
    resample->add_option("--ckpt", res_ckpt, "model or trainer checkpoint")->required();
    resample->add_option("--in", res_in, "input WAV")->required();
    resample->add_option("--rate", res_rate, "output sample rate in Hz")->required();
    resample->add_option("--out", res_out, "output WAV")->required();
    resample->add_flag("--pcm16", res_pcm16, "write 16-bit PCM instead of float32");

    // eval
    auto* eval = app.add_subcommand(
        "eval", "Score reconstruction metrics over a dataset at one or more rates");
    std::string ev_ckpt, ev_data, ev_out;
    std::string ev_rates = "8000,16000,22050,44100";
    int ev_ingest = 0;
    int ev_threads = 0;
    eval->add_option("--ckpt", ev_ckpt, "model or trainer checkpoint")->required();
    eval->add_option("--data", ev_data, "dataset root, one subdirectory per speaker")->required();
    eval->add_option("--rates", ev_rates, "comma-separated output rates in Hz");
    eval->add_option("--out", ev_out, "directory for per-rate CSV and JSON reports")->required();
    eval->add_option("--ingest-rate", ev_ingest,
                     "rate the files are brought to before encoding, 0 uses the first file's");
    eval->add_option("--threads", ev_threads, "worker cap, 0 picks automatically");

    // gradcheck
    auto* gradcheck = app.add_subcommand(
        "gradcheck", "Compare analytic gradients against finite differences");
    std::string gc_component = "all";
    std::uint64_t gc_seed = 0;
    gradcheck->add_option("--component", gc_component,
                          "target, head, encoder, loss, end2end, or all");
    gradcheck->add_option("--seed", gc_seed, "fixture seed");

    // spectrogram
    auto* spectrogram = app.add_subcommand("spectrogram", "Export a magnitude spectrogram as CSV");
    std::string sp_in, sp_out;
    std::size_t sp_fft = 1024;
    std::size_t sp_hop = 0;
    spectrogram->add_option("--in", sp_in, "input WAV")->required();
    spectrogram->add_option("--fft", sp_fft, "FFT size");
    spectrogram->add_option("--hop", sp_hop, "hop in samples, 0 means fft/4");
    spectrogram->add_option("--out", sp_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            TrainSettings s;
            if (!preset.empty()) apply_preset(s, preset);
            if (!config_path.empty()) apply_config_file(s, config_path);
            if (train->count("--data")) s.data = cli_values.data;
            if (train->count("--out")) s.out = cli_values.out;
            if (train->count("--steps")) s.steps = cli_values.steps;
            if (train->count("--seed")) s.seed = cli_values.seed;
            if (train->count("--batch-size")) s.batch_size = cli_values.batch_size;
            if (train->count("--lr")) s.lr = cli_values.lr;
            if (train->count("--crop")) s.crop_length = cli_values.crop_length;
            if (train->count("--rate")) s.target_rate = cli_values.target_rate;
            if (train->count("--val-speakers")) s.val_speakers = cli_values.val_speakers;
            if (train->count("--checkpoint-every")) s.checkpoint_every = cli_values.checkpoint_every;
            if (train->count("--log-every")) s.log_every = cli_values.log_every;
            if (train->count("--threads")) s.threads = cli_values.threads;
            return run_train(s);
        }
        if (*encode) return run_encode(enc_ckpt, enc_in, enc_out);
        if (*render) return run_render(ren_inr, ren_rate, ren_samples, ren_out, ren_pcm16);
        if (*resample) return run_resample(res_ckpt, res_in, res_rate, res_out, res_pcm16);
        if (*eval) return run_eval(ev_ckpt, ev_data, ev_rates, ev_out, ev_ingest, ev_threads);
        if (*gradcheck) return run_gradcheck(gc_component, gc_seed);
        if (*spectrogram) return run_spectrogram(sp_in, sp_fft, sp_hop, sp_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const resin::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
