#include "resin/dataset.hpp"

#include "resin/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

namespace resin {

namespace fs = std::filesystem;

namespace {

bool has_wav_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".wav";
}

// Resample caches are named "<stem>.<rate>.wav"; skip them during scans so
// rebuilding a manifest does not ingest its own byproducts.
bool is_resample_cache(const fs::path& p) {
    const std::string stem = p.stem().string();
    const std::size_t dot = stem.rfind('.');
    if (dot == std::string::npos || dot + 1 == stem.size()) return false;
    return std::all_of(stem.begin() + static_cast<std::ptrdiff_t>(dot) + 1, stem.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

} // namespace

ManifestPair build_manifest(const std::string& root, std::size_t crop_length,
                            int target_rate, std::size_t val_speakers) {
    if (crop_length == 0) raise(ErrorCode::InvalidArgument, "crop length must be positive");
    if (target_rate <= 0) raise(ErrorCode::InvalidArgument, "target rate must be positive");
    if (!fs::is_directory(root)) raise(ErrorCode::EmptyDataset, "no such dataset root: " + root);

    std::map<std::string, std::vector<fs::path>> speakers;
    for (const fs::directory_entry& dir : fs::directory_iterator(root)) {
        if (!dir.is_directory()) continue;
        std::vector<fs::path> files;
        for (const fs::directory_entry& f : fs::directory_iterator(dir.path())) {
            if (!f.is_regular_file() || !has_wav_extension(f.path())) continue;
            if (is_resample_cache(f.path())) continue;
            files.push_back(f.path());
        }
        if (!files.empty()) {
            std::sort(files.begin(), files.end());
            speakers.emplace(dir.path().filename().string(), std::move(files));
        }
    }
    if (speakers.empty()) raise(ErrorCode::EmptyDataset, "no speaker directories with WAV files");
    if (val_speakers >= speakers.size()) {
        raise(ErrorCode::EmptyDataset, "validation split would consume every speaker");
    }

    ManifestPair pair;
    pair.train.crop_length = pair.val.crop_length = crop_length;
    pair.train.target_rate = pair.val.target_rate = target_rate;

    const std::size_t train_count = speakers.size() - val_speakers;
    std::size_t index = 0;
    for (const auto& [speaker, files] : speakers) {
        DatasetManifest& dest = index < train_count ? pair.train : pair.val;
        ++index;
        for (const fs::path& path : files) {
            AudioBuffer audio;
            try {
                audio = read_wav(path.string());
            } catch (const Error&) {
                ++pair.unreadable_skipped;
                continue;
            }
            ManifestEntry entry;
            entry.speaker_id = speaker;
            if (audio.sample_rate == target_rate) {
                entry.path = path.string();
                entry.num_samples = audio.samples.size();
            } else {
                fs::path cache = path;
                cache.replace_extension();
                cache += "." + std::to_string(target_rate) + ".wav";
                if (fs::exists(cache)) {
                    const AudioBuffer cached = read_wav(cache.string());
                    entry.num_samples = cached.samples.size();
                } else {
                    const AudioBuffer resampled = sinc_resample(audio, target_rate);
                    write_wav(resampled, cache.string(), WavEncoding::Float32);
                    entry.num_samples = resampled.samples.size();
                }
                entry.path = cache.string();
            }
            entry.sample_rate = target_rate;
            dest.entries.push_back(std::move(entry));
        }
    }
    if (pair.train.entries.empty()) raise(ErrorCode::EmptyDataset, "training split is empty");
    return pair;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["crop_length"] = manifest.crop_length;
    j["target_rate"] = manifest.target_rate;
    j["entries"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.entries) {
        j["entries"].push_back({{"path", e.path},
                                {"speaker_id", e.speaker_id},
                                {"num_samples", e.num_samples},
                                {"sample_rate", e.sample_rate}});
    }
    std::ofstream f(path);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path + " for writing");
    f << j.dump(2) << "\n";
    if (!f) raise(ErrorCode::IoError, "short write to " + path);
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) raise(ErrorCode::IoError, "cannot open " + path);
    DatasetManifest manifest;
    try {
        const nlohmann::json j = nlohmann::json::parse(f);
        manifest.crop_length = j.at("crop_length").get<std::size_t>();
        manifest.target_rate = j.at("target_rate").get<int>();
        for (const nlohmann::json& e : j.at("entries")) {
            ManifestEntry entry;
            entry.path = e.at("path").get<std::string>();
            entry.speaker_id = e.at("speaker_id").get<std::string>();
            entry.num_samples = e.at("num_samples").get<std::size_t>();
            entry.sample_rate = e.at("sample_rate").get<int>();
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::CorruptHeader, std::string("bad manifest: ") + e.what());
    }
    return manifest;
}

AudioBuffer random_crop(const AudioBuffer& x, std::size_t crop_length, Rng& rng) {
    if (crop_length == 0) raise(ErrorCode::InvalidArgument, "crop length must be positive");
    AudioBuffer out;
    out.sample_rate = x.sample_rate;
    out.samples.assign(crop_length, 0.0);
    if (x.samples.size() <= crop_length) {
        std::copy(x.samples.begin(), x.samples.end(), out.samples.begin());
        return out;
    }
    const std::size_t offset = rng.uniform_index(x.samples.size() - crop_length + 1);
    std::copy(x.samples.begin() + static_cast<std::ptrdiff_t>(offset),
              x.samples.begin() + static_cast<std::ptrdiff_t>(offset + crop_length),
              out.samples.begin());
    return out;
}

AudioBuffer phase_mangle(const AudioBuffer& x, double break_freq, int rate) {
    if (rate <= 0 || break_freq <= 0.0 || break_freq >= rate / 2.0) {
        raise(ErrorCode::InvalidBreakFrequency, "break frequency must lie in (0, rate/2)");
    }
    const double tn = std::tan(std::numbers::pi * break_freq / rate);
    const double p = (1.0 - tn) / (1.0 + tn);
    AudioBuffer out;
    out.sample_rate = x.sample_rate;
    out.samples.resize(x.samples.size());
    double x_prev = 0.0;
    double y_prev = 0.0;
    for (std::size_t n = 0; n < x.samples.size(); ++n) {
        const double y = p * x.samples[n] + x_prev - p * y_prev;
        out.samples[n] = y;
        x_prev = x.samples[n];
        y_prev = y;
    }
    return out;
}

AudioBuffer dequantize(const AudioBuffer& x, double lsb, Rng& rng) {
    if (lsb <= 0.0) raise(ErrorCode::InvalidArgument, "lsb must be positive");
    AudioBuffer out;
    out.sample_rate = x.sample_rate;
    out.samples.resize(x.samples.size());
    for (std::size_t i = 0; i < x.samples.size(); ++i) {
        out.samples[i] = x.samples[i] + (rng.uniform() - 0.5) * lsb;
    }
    return out;
}

std::vector<AudioBuffer> make_batch(const DatasetManifest& manifest,
                                    const AugmentConfig& augment, std::size_t batch_size,
                                    std::uint64_t first_example_index) {
    if (batch_size == 0) raise(ErrorCode::InvalidArgument, "batch size must be positive");
    if (manifest.entries.empty()) raise(ErrorCode::EmptyDataset, "manifest has no entries");
    std::vector<AudioBuffer> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) {
        Rng rng(augment.seed, first_example_index + k);
        const std::size_t file_idx = rng.uniform_index(manifest.entries.size());
        const AudioBuffer full = read_wav(manifest.entries[file_idx].path);
        AudioBuffer crop;
        if (augment.crop) {
            crop = random_crop(full, manifest.crop_length, rng);
        } else {
            crop.sample_rate = full.sample_rate;
            crop.samples.assign(manifest.crop_length, 0.0);
            std::copy(full.samples.begin(),
                      full.samples.begin() + static_cast<std::ptrdiff_t>(
                          std::min(full.samples.size(), manifest.crop_length)),
                      crop.samples.begin());
        }
        if (augment.phase_mangle.enabled) {
            const double log_lo = std::log(augment.phase_mangle.f_min);
            const double log_hi = std::log(augment.phase_mangle.f_max);
            const double freq = std::exp(rng.uniform(log_lo, log_hi));
            crop = phase_mangle(crop, freq, manifest.target_rate);
        }
        if (augment.dequantize.enabled) {
            crop = dequantize(crop, augment.dequantize.lsb, rng);
        }
        batch.push_back(std::move(crop));
    }
    return batch;
}

} // namespace resin
