#include <doctest.h>

#include <resin/dataset.hpp>
#include <resin/errors.hpp>
#include <resin/fft.hpp>
#include <resin/rng.hpp>

#include "helpers.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

using resin::AudioBuffer;
using resin::AugmentConfig;
using resin::DatasetManifest;
using resin::ErrorCode;
using resin::Rng;
using testing::make_buffer;
using testing::random_buffer;
using testing::thrown_code;

namespace fs = std::filesystem;

namespace {

void write_tone(const std::string& path, std::size_t n, int rate, std::uint64_t seed) {
    resin::write_wav(random_buffer(n, rate, seed), path, resin::WavEncoding::Float32);
}

} // namespace

TEST_CASE("manifest scan splits the last speakers into validation") {
    oracle::TempDir dir("data");
    for (const char* spk : {"alice", "bob", "carol"}) {
        fs::create_directories(dir.path() / spk);
        write_tone((dir.path() / spk / "x.wav").string(), 300, 16000, 90);
        write_tone((dir.path() / spk / "a.wav").string(), 280, 16000, 91);
    }
    std::ofstream(dir.file("stray.txt")) << "ignored";

    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 1);
    REQUIRE(pair.train.entries.size() == 4);
    REQUIRE(pair.val.entries.size() == 2);
    CHECK(pair.unreadable_skipped == 0);
    CHECK(pair.train.crop_length == 64);
    CHECK(pair.train.target_rate == 16000);
    CHECK(pair.train.entries[0].speaker_id == "alice");
    CHECK(pair.train.entries[2].speaker_id == "bob");
    CHECK(pair.val.entries[0].speaker_id == "carol");
    // Files sort within each speaker.
    CHECK(fs::path(pair.train.entries[0].path).filename() == "a.wav");
    CHECK(pair.train.entries[0].num_samples == 280);
    CHECK(pair.train.entries[1].num_samples == 300);
}

TEST_CASE("off rate files are resampled once and cached") {
    oracle::TempDir dir("data");
    fs::create_directories(dir.path() / "s0");
    fs::create_directories(dir.path() / "s1");
    write_tone((dir.path() / "s0" / "tone.wav").string(), 2205, 22050, 92);
    write_tone((dir.path() / "s1" / "keep.wav").string(), 160, 16000, 93);

    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 1);
    REQUIRE(pair.train.entries.size() == 1);
    const auto& e = pair.train.entries[0];
    CHECK(fs::path(e.path).filename() == "tone.16000.wav");
    CHECK(fs::exists(e.path));
    CHECK(e.num_samples == 1600);
    CHECK(e.sample_rate == 16000);
    // Native rate files are referenced in place.
    CHECK(fs::path(pair.val.entries[0].path).filename() == "keep.wav");

    // A rescan must not ingest the cache as a second source file.
    const auto again = resin::build_manifest(dir.path().string(), 64, 16000, 1);
    CHECK(again.train.entries.size() == 1);
    CHECK(again.train.entries[0].num_samples == 1600);
}

TEST_CASE("unreadable files are skipped and counted") {
    oracle::TempDir dir("data");
    fs::create_directories(dir.path() / "s0");
    write_tone((dir.path() / "s0" / "ok.wav").string(), 120, 16000, 94);
    std::ofstream(dir.path() / "s0" / "bad.wav") << "not audio";

    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 0);
    CHECK(pair.train.entries.size() == 1);
    CHECK(pair.unreadable_skipped == 1);
}

TEST_CASE("manifest construction rejects impossible requests") {
    oracle::TempDir dir("data");
    fs::create_directories(dir.path() / "only");
    write_tone((dir.path() / "only" / "x.wav").string(), 100, 16000, 95);

    CHECK(thrown_code([&] { resin::build_manifest(dir.path().string(), 64, 16000, 1); }) ==
          ErrorCode::EmptyDataset);
    CHECK(thrown_code([&] { resin::build_manifest(dir.file("nope"), 64, 16000, 0); }) ==
          ErrorCode::EmptyDataset);
    CHECK(thrown_code([&] { resin::build_manifest(dir.path().string(), 0, 16000, 0); }) ==
          ErrorCode::InvalidArgument);
    CHECK(thrown_code([&] { resin::build_manifest(dir.path().string(), 64, 0, 0); }) ==
          ErrorCode::InvalidArgument);

    oracle::TempDir empty("data");
    CHECK(thrown_code([&] { resin::build_manifest(empty.path().string(), 64, 16000, 0); }) ==
          ErrorCode::EmptyDataset);
}

TEST_CASE("manifests round trip through json") {
    oracle::TempDir dir("mani");
    DatasetManifest m;
    m.crop_length = 2048;
    m.target_rate = 16000;
    m.entries.push_back({"/tmp/a.wav", "spk", 1234, 16000});
    resin::save_manifest(m, dir.file("m.json"));
    const DatasetManifest r = resin::load_manifest(dir.file("m.json"));
    CHECK(r.crop_length == 2048);
    CHECK(r.target_rate == 16000);
    REQUIRE(r.entries.size() == 1);
    CHECK(r.entries[0].path == "/tmp/a.wav");
    CHECK(r.entries[0].speaker_id == "spk");
    CHECK(r.entries[0].num_samples == 1234);

    std::ofstream(dir.file("junk.json")) << "{]";
    CHECK(thrown_code([&] { resin::load_manifest(dir.file("junk.json")); }) ==
          ErrorCode::CorruptHeader);
    CHECK(thrown_code([&] { resin::load_manifest(dir.file("gone.json")); }) == ErrorCode::IoError);
}

TEST_CASE("random crops are windows of the source") {
    const AudioBuffer x = random_buffer(200, 16000, 96);
    Rng rng(5, 0);
    const AudioBuffer crop = resin::random_crop(x, 64, rng);
    REQUIRE(crop.size() == 64);
    bool found = false;
    for (std::size_t off = 0; off + 64 <= 200 && !found; ++off) {
        bool match = true;
        for (std::size_t i = 0; i < 64 && match; ++i) {
            match = crop.samples[i] == x.samples[off + i];
        }
        found = match;
    }
    CHECK(found);

    Rng rng2(5, 0);
    const AudioBuffer crop2 = resin::random_crop(x, 64, rng2);
    CHECK(crop2.samples == crop.samples);
}

TEST_CASE("short sources crop to a zero padded prefix") {
    const AudioBuffer x = random_buffer(40, 16000, 97);
    Rng rng(6, 0);
    const AudioBuffer crop = resin::random_crop(x, 64, rng);
    REQUIRE(crop.size() == 64);
    for (std::size_t i = 0; i < 40; ++i) CHECK(crop.samples[i] == x.samples[i]);
    for (std::size_t i = 40; i < 64; ++i) CHECK(crop.samples[i] == 0.0);

    const AudioBuffer same = resin::random_crop(x, 40, rng);
    CHECK(same.samples == x.samples);
}

TEST_CASE("phase mangle has the allpass impulse response") {
    std::vector<double> imp(24, 0.0);
    imp[0] = 1.0;
    const double break_freq = 1500.0;
    const int rate = 16000;
    const double tn = std::tan(std::acos(-1.0) * break_freq / rate);
    const double p = (1.0 - tn) / (1.0 + tn);
    const AudioBuffer y = resin::phase_mangle(make_buffer(imp, rate), break_freq, rate);
    CHECK(y.samples[0] == doctest::Approx(p).epsilon(1e-12));
    for (std::size_t n = 1; n < y.size(); ++n) {
        const double want = (1.0 - p * p) * std::pow(-p, static_cast<double>(n - 1));
        CHECK(y.samples[n] == doctest::Approx(want).epsilon(1e-10).scale(1e-6));
    }
}

TEST_CASE("phase mangle passes dc and preserves magnitudes") {
    const int rate = 16000;
    const AudioBuffer dc = make_buffer(std::vector<double>(256, 0.5), rate);
    const AudioBuffer ydc = resin::phase_mangle(dc, 2000.0, rate);
    for (std::size_t i = 100; i < 256; ++i) {
        CHECK(ydc.samples[i] == doctest::Approx(0.5).epsilon(1e-9));
    }

    // Exact-bin sine: the allpass shifts phase but keeps the peak magnitude.
    // The lag hits a quarter cycle where the break and signal frequencies sum
    // to Nyquist, so a 4 kHz sine with a 4 kHz break moves a lot.
    const std::size_t n = 4096;
    const std::size_t bin = 1024;
    std::vector<double> x(n);
    const double pi = std::acos(-1.0);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 0.5 * std::sin(2.0 * pi * static_cast<double>(bin) * static_cast<double>(i) /
                              static_cast<double>(n));
    }
    const AudioBuffer y = resin::phase_mangle(make_buffer(x, rate), 4000.0, rate);

    double ex = 0.0, ey = 0.0, max_diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ex += x[i] * x[i];
        ey += y.samples[i] * y.samples[i];
        max_diff = std::max(max_diff, std::abs(y.samples[i] - x[i]));
    }
    CHECK(ey == doctest::Approx(ex).epsilon(5e-3));
    CHECK(max_diff > 0.3); // the waveform itself must actually move

    std::vector<double> xr, xi, yr, yi;
    resin::real_dft_onesided(x.data(), n, xr, xi);
    resin::real_dft_onesided(y.samples.data(), n, yr, yi);
    const double mx = std::hypot(xr[bin], xi[bin]);
    const double my = std::hypot(yr[bin], yi[bin]);
    CHECK(my == doctest::Approx(mx).epsilon(1e-2));
}

TEST_CASE("phase mangle rejects out of band break frequencies") {
    const AudioBuffer x = random_buffer(32, 16000, 98);
    CHECK(thrown_code([&] { resin::phase_mangle(x, 0.0, 16000); }) ==
          ErrorCode::InvalidBreakFrequency);
    CHECK(thrown_code([&] { resin::phase_mangle(x, 8000.0, 16000); }) ==
          ErrorCode::InvalidBreakFrequency);
    CHECK(thrown_code([&] { resin::phase_mangle(x, -5.0, 16000); }) ==
          ErrorCode::InvalidBreakFrequency);
    CHECK(thrown_code([&] { resin::phase_mangle(x, 100.0, 0); }) ==
          ErrorCode::InvalidBreakFrequency);
}

TEST_CASE("dequantize adds bounded reproducible noise") {
    const AudioBuffer x = random_buffer(500, 16000, 99);
    const double lsb = 1.0 / 32768.0;
    Rng rng(7, 3);
    const AudioBuffer y = resin::dequantize(x, lsb, rng);
    REQUIRE(y.size() == x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = std::abs(y.samples[i] - x.samples[i]);
        CHECK(d <= lsb / 2.0);
        total += d;
    }
    CHECK(total > 0.0);

    Rng rng2(7, 3);
    const AudioBuffer y2 = resin::dequantize(x, lsb, rng2);
    CHECK(y2.samples == y.samples);

    Rng rng3(7, 4);
    const AudioBuffer y3 = resin::dequantize(x, lsb, rng3);
    CHECK(y3.samples != y.samples);

    CHECK(thrown_code([&] {
              Rng r(1, 1);
              resin::dequantize(x, 0.0, r);
          }) == ErrorCode::InvalidArgument);
}

TEST_CASE("batches are deterministic in the absolute example index") {
    oracle::TempDir dir("batch");
    fs::create_directories(dir.path() / "s0");
    write_tone((dir.path() / "s0" / "one.wav").string(), 300, 16000, 100);
    write_tone((dir.path() / "s0" / "two.wav").string(), 300, 16000, 101);
    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 0);

    AugmentConfig augment;
    augment.seed = 11;

    const auto whole = resin::make_batch(pair.train, augment, 4, 0);
    REQUIRE(whole.size() == 4);
    for (const auto& b : whole) {
        CHECK(b.size() == 64);
        CHECK(b.sample_rate == 16000);
    }

    const auto again = resin::make_batch(pair.train, augment, 4, 0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(again[k].samples == whole[k].samples);

    // Two half batches at the right offsets reproduce the full batch, so any
    // worker partitioning yields identical data.
    const auto left = resin::make_batch(pair.train, augment, 2, 0);
    const auto right = resin::make_batch(pair.train, augment, 2, 2);
    CHECK(left[0].samples == whole[0].samples);
    CHECK(left[1].samples == whole[1].samples);
    CHECK(right[0].samples == whole[2].samples);
    CHECK(right[1].samples == whole[3].samples);

    const auto shifted = resin::make_batch(pair.train, augment, 4, 100);
    bool any_diff = false;
    for (std::size_t k = 0; k < 4; ++k) any_diff = any_diff || shifted[k].samples != whole[k].samples;
    CHECK(any_diff);

    AugmentConfig other = augment;
    other.seed = 12;
    const auto reseeded = resin::make_batch(pair.train, other, 4, 0);
    any_diff = false;
    for (std::size_t k = 0; k < 4; ++k) any_diff = any_diff || reseeded[k].samples != whole[k].samples;
    CHECK(any_diff);
}

TEST_CASE("plain crops are verbatim windows of the corpus") {
    oracle::TempDir dir("batch");
    fs::create_directories(dir.path() / "s0");
    write_tone((dir.path() / "s0" / "one.wav").string(), 300, 16000, 102);
    write_tone((dir.path() / "s0" / "two.wav").string(), 260, 16000, 103);
    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 0);

    AugmentConfig augment;
    augment.seed = 21;
    const auto batch = resin::make_batch(pair.train, augment, 6, 0);

    std::vector<AudioBuffer> files;
    for (const auto& e : pair.train.entries) files.push_back(resin::read_wav(e.path));

    for (const auto& b : batch) {
        bool found = false;
        for (const auto& f : files) {
            for (std::size_t off = 0; off + 64 <= f.size() && !found; ++off) {
                bool match = true;
                for (std::size_t i = 0; i < 64 && match; ++i) {
                    match = b.samples[i] == f.samples[off + i];
                }
                found = match;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("disabling the crop takes the file prefix") {
    oracle::TempDir dir("batch");
    fs::create_directories(dir.path() / "s0");
    write_tone((dir.path() / "s0" / "one.wav").string(), 40, 16000, 104);
    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 0);

    AugmentConfig augment;
    augment.crop = false;
    const auto batch = resin::make_batch(pair.train, augment, 2, 0);
    const AudioBuffer file = resin::read_wav(pair.train.entries[0].path);
    for (const auto& b : batch) {
        REQUIRE(b.size() == 64);
        for (std::size_t i = 0; i < 40; ++i) CHECK(b.samples[i] == file.samples[i]);
        for (std::size_t i = 40; i < 64; ++i) CHECK(b.samples[i] == 0.0);
    }
}

TEST_CASE("full augmentation stays deterministic") {
    oracle::TempDir dir("batch");
    fs::create_directories(dir.path() / "s0");
    write_tone((dir.path() / "s0" / "one.wav").string(), 300, 16000, 105);
    const auto pair = resin::build_manifest(dir.path().string(), 64, 16000, 0);

    AugmentConfig augment;
    augment.seed = 31;
    augment.phase_mangle.enabled = true;
    augment.dequantize.enabled = true;
    const auto a = resin::make_batch(pair.train, augment, 3, 7);
    const auto b = resin::make_batch(pair.train, augment, 3, 7);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a[k].samples == b[k].samples);

    AugmentConfig plain;
    plain.seed = 31;
    const auto c = resin::make_batch(pair.train, plain, 3, 7);
    bool any_diff = false;
    for (std::size_t k = 0; k < 3; ++k) any_diff = any_diff || a[k].samples != c[k].samples;
    CHECK(any_diff);

    CHECK(thrown_code([&] { resin::make_batch(pair.train, augment, 0, 0); }) ==
          ErrorCode::InvalidArgument);
    DatasetManifest empty;
    empty.crop_length = 64;
    empty.target_rate = 16000;
    CHECK(thrown_code([&] { resin::make_batch(empty, augment, 2, 0); }) ==
          ErrorCode::EmptyDataset);
}
