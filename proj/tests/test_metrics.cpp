#include <doctest.h>

#include <resin/errors.hpp>
#include <resin/hypernet.hpp>
#include <resin/metrics.hpp>

#include <json.hpp>

#include "helpers.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

using resin::AudioBuffer;
using resin::ErrorCode;
using testing::make_buffer;
using testing::random_buffer;
using testing::thrown_code;

namespace {

resin::HyperNetModel zero_model() {
    auto m = resin::init_model(1, resin::EncoderConfig{4, {2, 4}, {1, 3}, 8},
                               resin::HeadConfig{16, 6, 0}, resin::TargetNetConfig{2, {8, 8}});
    std::fill(m.params.begin(), m.params.end(), 0.0);
    return m;
}

resin::DatasetManifest manifest_for(const std::vector<resin::ManifestEntry>& entries, int rate) {
    resin::DatasetManifest m;
    m.entries = entries;
    m.target_rate = rate;
    return m;
}

resin::ManifestEntry write_entry(const oracle::TempDir& dir, const std::string& speaker,
                                 const std::string& name, const AudioBuffer& audio) {
    const std::string path = dir.file(name);
    resin::write_wav(audio, path, resin::WavEncoding::Float32);
    resin::ManifestEntry e;
    e.path = path;
    e.speaker_id = speaker;
    e.num_samples = audio.size();
    e.sample_rate = audio.sample_rate;
    return e;
}

} // namespace

TEST_CASE("mse is the mean squared difference") {
    const AudioBuffer x = random_buffer(100, 16000, 70);
    CHECK(resin::mse(x, x) == 0.0);
    CHECK(resin::mse(make_buffer({0.0, 0.1}, 16000), make_buffer({0.1, 0.3}, 16000)) ==
          doctest::Approx(0.025).epsilon(1e-12));

    const AudioBuffer y = random_buffer(100, 16000, 71);
    double want = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        want += (x.samples[i] - y.samples[i]) * (x.samples[i] - y.samples[i]);
    }
    want /= 100.0;
    CHECK(resin::mse(x, y) == doctest::Approx(want).epsilon(1e-12));

    CHECK(thrown_code([&] { resin::mse(x, make_buffer({0.1}, 16000)); }) ==
          ErrorCode::LengthMismatch);
    CHECK(thrown_code([&] { resin::mse(make_buffer({}, 16000), make_buffer({}, 16000)); }) ==
          ErrorCode::EmptySignal);
}

TEST_CASE("lsd of a power scale is the log ratio") {
    const AudioBuffer x = random_buffer(4096, 16000, 72, 0.9);
    CHECK(resin::lsd(x, x) == 0.0);

    AudioBuffer scaled = x;
    const double root10 = std::sqrt(10.0);
    for (double& s : scaled.samples) s *= root10;
    // Power ratio 10 everywhere, so every bin contributes one decade.
    CHECK(resin::lsd(x, scaled) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(resin::lsd(scaled, x) == doctest::Approx(resin::lsd(x, scaled)).epsilon(1e-12));
}

TEST_CASE("si snr matches the constructed example") {
    const AudioBuffer x = make_buffer({1.0, -1.0, 1.0, -1.0}, 16000);
    const AudioBuffer xhat = make_buffer({1.1, -0.9, 0.9, -1.1}, 16000);
    CHECK(resin::si_snr(x, xhat) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("si snr is scale invariant and rewards vanishing error") {
    const AudioBuffer x = random_buffer(256, 16000, 73);
    const AudioBuffer xhat = random_buffer(256, 16000, 74);
    const double base = resin::si_snr(x, xhat);
    for (double a : {0.5, 3.0}) {
        AudioBuffer scaled = xhat;
        for (double& s : scaled.samples) s *= a;
        CHECK(resin::si_snr(x, scaled) == doctest::Approx(base).epsilon(1e-9));
        AudioBuffer ref = x;
        for (double& s : ref.samples) s *= a;
        CHECK(resin::si_snr(ref, xhat) == doctest::Approx(base).epsilon(1e-9));
    }

    CHECK(resin::si_snr(x, x) == std::numeric_limits<double>::infinity());

    // Shrinking an orthogonalized error drives the score up without bound.
    AudioBuffer w = random_buffer(256, 16000, 75);
    double wx = 0.0, xx = 0.0, mw = 0.0, mx = 0.0;
    for (double s : w.samples) mw += s;
    for (double s : x.samples) mx += s;
    mw /= 256.0;
    mx /= 256.0;
    for (std::size_t i = 0; i < 256; ++i) {
        wx += (w.samples[i] - mw) * (x.samples[i] - mx);
        xx += (x.samples[i] - mx) * (x.samples[i] - mx);
    }
    for (std::size_t i = 0; i < 256; ++i) {
        w.samples[i] = (w.samples[i] - mw) - wx / xx * (x.samples[i] - mx);
    }
    double prev = -std::numeric_limits<double>::infinity();
    for (double c : {1.0, 0.1, 1e-3, 1e-6}) {
        AudioBuffer noisy = x;
        for (std::size_t i = 0; i < 256; ++i) noisy.samples[i] += c * w.samples[i];
        const double snr = resin::si_snr(x, noisy);
        CHECK(snr > prev);
        prev = snr;
    }
    CHECK(prev > 100.0);
}

TEST_CASE("si snr rejects zero variance signals") {
    // 0.5 sums exactly, so the mean removal leaves true zeros.
    const AudioBuffer flat = make_buffer(std::vector<double>(64, 0.5), 16000);
    const AudioBuffer zero = make_buffer(std::vector<double>(64, 0.0), 16000);
    const AudioBuffer x = random_buffer(64, 16000, 76);
    CHECK(thrown_code([&] { resin::si_snr(flat, x); }) == ErrorCode::DegenerateSignal);
    CHECK(thrown_code([&] { resin::si_snr(x, flat); }) == ErrorCode::DegenerateSignal);
    CHECK(thrown_code([&] { resin::si_snr(zero, zero); }) == ErrorCode::DegenerateSignal);
}

TEST_CASE("evaluating a zero model scores silence against the resampled truth") {
    oracle::TempDir dir("eval");
    const auto m = zero_model();
    std::vector<resin::ManifestEntry> entries;
    std::vector<AudioBuffer> sources;
    for (int i = 0; i < 3; ++i) {
        sources.push_back(random_buffer(2048, 16000, 80 + static_cast<std::uint64_t>(i)));
        entries.push_back(
            write_entry(dir, "spk" + std::to_string(i), "f" + std::to_string(i) + ".wav",
                        sources.back()));
    }

    const auto report = resin::evaluate_set(m, manifest_for(entries, 16000), 16000);
    REQUIRE(report.per_sample.size() == 3);
    CHECK(report.failures.empty());
    CHECK(report.per_sample[0].id == "spk0/f0.wav");

    double mse_mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& row = report.per_sample[i];
        // Silent estimate: MSE collapses to the signal power, SI-SNR degenerates.
        double power = 0.0;
        for (double s : sources[i].samples) power += s * s;
        power /= static_cast<double>(sources[i].size());
        CHECK(row.mse == doctest::Approx(power).epsilon(1e-9));
        CHECK(row.lsd > 0.0);
        CHECK(std::isfinite(row.lsd));
        CHECK(std::isnan(row.si_snr_db));
        mse_mean += row.mse;
    }
    CHECK(report.mean_mse == doctest::Approx(mse_mean / 3.0).epsilon(1e-12));
    CHECK(report.si_snr_excluded == 3);
    CHECK(std::isnan(report.mean_si_snr_db));

    // Order of entries does not change the aggregates.
    auto reversed = entries;
    std::reverse(reversed.begin(), reversed.end());
    const auto rreport = resin::evaluate_set(m, manifest_for(reversed, 16000), 16000);
    CHECK(rreport.mean_mse == doctest::Approx(report.mean_mse).epsilon(1e-12));
    CHECK(rreport.mean_lsd == doctest::Approx(report.mean_lsd).epsilon(1e-12));
}

TEST_CASE("evaluation retargets the grid to the requested rate") {
    oracle::TempDir dir("eval");
    const auto m = zero_model();
    const auto entry = write_entry(dir, "s", "a.wav", random_buffer(2048, 16000, 85));
    for (int rate : {8000, 16000, 32000, 64000}) {
        const auto report = resin::evaluate_set(m, manifest_for({entry}, 16000), rate);
        REQUIRE(report.per_sample.size() == 1);
        CHECK(std::isfinite(report.per_sample[0].mse));
        CHECK(std::isfinite(report.per_sample[0].lsd));
    }
}

TEST_CASE("item failures are recorded and excluded") {
    oracle::TempDir dir("eval");
    const auto m = zero_model();
    auto good = write_entry(dir, "s", "good.wav", random_buffer(600, 16000, 86));
    resin::ManifestEntry missing = good;
    missing.path = dir.file("missing.wav");
    // Long enough to encode but collapsing to a sub-two-sample grid.
    auto tiny = write_entry(dir, "s", "tiny.wav", random_buffer(16, 16000, 87));

    const auto report = resin::evaluate_set(m, manifest_for({good, missing, tiny}, 16000), 1000);
    REQUIRE(report.per_sample.size() == 1);
    CHECK(report.per_sample[0].id == "s/good.wav");
    REQUIRE(report.failures.size() == 2);
    CHECK(report.failures[0].id == "s/missing.wav");
    CHECK(report.failures[0].reason.find("IoError") != std::string::npos);
    CHECK(report.failures[1].id == "s/tiny.wav");
    CHECK(report.failures[1].reason.find("grid too small") != std::string::npos);

    CHECK(thrown_code([&] { resin::evaluate_set(m, manifest_for({}, 16000), 16000); }) ==
          ErrorCode::EmptyDataset);
    CHECK(thrown_code([&] { resin::evaluate_set(m, manifest_for({good}, 16000), 0); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("reports serialize to csv and json") {
    oracle::TempDir dir("report");
    resin::MetricReport report;
    report.per_sample.push_back({"a/x.wav", 0.5, 1.25, 12.5});
    report.per_sample.push_back({"b/y.wav", 0.25, 2.0, std::numeric_limits<double>::quiet_NaN()});
    report.per_sample.push_back({"c/z.wav", 0.125, 0.5, std::numeric_limits<double>::infinity()});
    report.failures.push_back({"d/bad.wav", "IoError: cannot open"});
    resin::finalize_aggregates(report);
    CHECK(report.mean_mse == doctest::Approx(0.875 / 3.0).epsilon(1e-12));
    CHECK(report.mean_si_snr_db == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(report.si_snr_excluded == 2);

    resin::write_report_csv(report, dir.file("r.csv"));
    std::ifstream f(dir.file("r.csv"));
    std::string line;
    REQUIRE(static_cast<bool>(std::getline(f, line)));
    CHECK(line == "id,mse,lsd,si_snr_db");
    REQUIRE(static_cast<bool>(std::getline(f, line)));
    CHECK(line == "a/x.wav,0.5,1.25,12.5");
    REQUIRE(static_cast<bool>(std::getline(f, line)));
    CHECK(line.find("nan") != std::string::npos);
    REQUIRE(static_cast<bool>(std::getline(f, line)));
    CHECK(line.find("inf") != std::string::npos);
    CHECK(!std::getline(f, line));

    resin::write_report_json(report, dir.file("r.json"));
    std::ifstream jf(dir.file("r.json"));
    const auto j = nlohmann::json::parse(jf);
    REQUIRE(j["per_sample"].size() == 3);
    CHECK(j["per_sample"][0]["si_snr_db"] == 12.5);
    CHECK(j["per_sample"][1]["si_snr_db"].is_null());
    CHECK(j["per_sample"][1]["si_snr_note"] == "degenerate");
    CHECK(j["per_sample"][2]["si_snr_note"] == "infinite");
    CHECK(j["aggregate"]["items"] == 3);
    CHECK(j["aggregate"]["si_snr_excluded"] == 2);
    REQUIRE(j["failures"].size() == 1);
    CHECK(j["failures"][0]["id"] == "d/bad.wav");
}
