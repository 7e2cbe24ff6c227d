#pragma once

#include "resin/audio.hpp"
#include "resin/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace resin {

struct ManifestEntry {
    std::string path;
    std::string speaker_id;
    std::size_t num_samples = 0;
    int sample_rate = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::size_t crop_length = 0;
    int target_rate = 0;
};

struct PhaseMangleSettings {
    bool enabled = false;
    double f_min = 20.0;
    double f_max = 2000.0;
};

struct DequantizeSettings {
    bool enabled = false;
    double lsb = 1.0 / 32768.0;
};

struct AugmentConfig {
    bool crop = true;
    PhaseMangleSettings phase_mangle;
    DequantizeSettings dequantize;
    std::uint64_t seed = 0;
};

struct ManifestPair {
    DatasetManifest train;
    DatasetManifest val;
    std::size_t unreadable_skipped = 0;
};

// Scans root (one subdirectory per speaker, WAV files inside), resamples
// every file to target_rate on ingestion (cached beside the source as
// "<stem>.<rate>.wav"), sorts speakers lexicographically, and holds out the
// last val_speakers of them as the validation split.
ManifestPair build_manifest(const std::string& root, std::size_t crop_length,
                            int target_rate, std::size_t val_speakers);

void save_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// Uniformly random contiguous window of crop_length samples; shorter inputs
// are right-zero-padded.
AudioBuffer random_crop(const AudioBuffer& x, std::size_t crop_length, Rng& rng);

// First-order all-pass y[n] = p x[n] + x[n-1] - p y[n-1] with
// p = (1 - tan(pi f/rate)) / (1 + tan(pi f/rate)); perturbs phase while
// preserving the magnitude spectrum.
AudioBuffer phase_mangle(const AudioBuffer& x, double break_freq, int rate);

// Adds uniform noise in [-lsb/2, +lsb/2) per sample.
AudioBuffer dequantize(const AudioBuffer& x, double lsb, Rng& rng);

// batch_size augmented crops drawn with replacement. Example k of the batch
// uses its own rng stream (augment.seed, first_example_index + k), so batches
// are reproducible and independent of any worker partitioning.
std::vector<AudioBuffer> make_batch(const DatasetManifest& manifest,
                                    const AugmentConfig& augment, std::size_t batch_size,
                                    std::uint64_t first_example_index);

} // namespace resin
