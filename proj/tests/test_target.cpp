#include <doctest.h>

#include <resin/errors.hpp>
#include <resin/target_net.hpp>

#include "helpers.hpp"
#include "oracles.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <vector>

using resin::CoordinateGrid;
using resin::ErrorCode;
using resin::TargetNetConfig;
using resin::TargetNetParams;
using testing::thrown_code;

namespace {

TargetNetParams random_params(const TargetNetConfig& config, std::uint64_t seed,
                              double amp = 0.5) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    TargetNetParams p;
    p.config = config;
    p.theta.resize(resin::param_count(config));
    for (double& v : p.theta) v = dist(gen);
    return p;
}

void snap_f32(std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

// Walks the flat layout with independent slicing and the matrix oracle.
double oracle_forward(const TargetNetParams& p, double t) {
    std::vector<double> act = oracle::time_embedding(t, p.config.embedding_size);
    std::size_t off = 0;
    std::vector<std::size_t> sizes;
    sizes.push_back(2 * p.config.embedding_size);
    for (std::size_t w : p.config.hidden_widths) sizes.push_back(w);
    sizes.push_back(1);
    for (std::size_t layer = 0; layer + 1 < sizes.size(); ++layer) {
        const std::size_t in = sizes[layer], out = sizes[layer + 1];
        std::vector<double> w(p.theta.begin() + static_cast<std::ptrdiff_t>(off),
                              p.theta.begin() + static_cast<std::ptrdiff_t>(off + in * out));
        off += in * out;
        std::vector<double> b(p.theta.begin() + static_cast<std::ptrdiff_t>(off),
                              p.theta.begin() + static_cast<std::ptrdiff_t>(off + out));
        off += out;
        act = oracle::affine(w, b, act);
        if (layer + 2 < sizes.size()) oracle::relu_inplace(act);
    }
    REQUIRE(off == p.theta.size());
    return act[0];
}

std::vector<std::uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("time embedding interleaves sin and cos") {
    const auto e0 = resin::positional_embedding(0.0, 4);
    REQUIRE(e0.size() == 8);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(e0[2 * k] == 0.0);
        CHECK(e0[2 * k + 1] == 1.0);
    }
    const auto e1 = resin::positional_embedding(1.0, 3);
    CHECK(e1[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12)); // sin(pi)
    CHECK(e1[1] == doctest::Approx(-1.0).epsilon(1e-12));           // cos(pi)
    CHECK(e1[3] == doctest::Approx(1.0).epsilon(1e-12));            // cos(2 pi)
    CHECK(e1[5] == doctest::Approx(1.0).epsilon(1e-12));            // cos(4 pi)

    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 16; ++i) {
        const double t = dist(gen);
        const auto got = resin::positional_embedding(t, 6);
        const auto want = oracle::time_embedding(t, 6);
        for (std::size_t j = 0; j < want.size(); ++j) {
            CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("parameter counts for the published sizes") {
    CHECK(resin::param_count({16, {256, 256, 256, 256}}) == 206081);
    CHECK(resin::param_count({16, {64, 64, 64, 64}}) == 14657);
    CHECK(resin::param_count({16, {384, 384, 384, 384, 384, 384}}) == 752257);
    // 2L=4 inputs: 4*3+3, 3*2+2, 2*1+1 summed by hand.
    CHECK(resin::param_count({2, {3, 2}}) == 26);
}

TEST_CASE("forward agrees with an independent matrix walk") {
    const TargetNetConfig config{3, {5, 4}};
    const TargetNetParams p = random_params(config, 17);
    std::mt19937_64 gen(18);
    std::uniform_real_distribution<double> dist(-0.2, 1.2);
    for (int i = 0; i < 24; ++i) {
        const double t = dist(gen);
        CHECK(resin::forward(p, t) ==
              doctest::Approx(oracle_forward(p, t)).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("zero weights render silence") {
    TargetNetParams p;
    p.config = {4, {8, 8}};
    p.theta.assign(resin::param_count(p.config), 0.0);
    const auto out = resin::render(p, resin::make_grid(64, 16000));
    REQUIRE(out.size() == 64);
    CHECK(out.sample_rate == 16000);
    for (double s : out.samples) CHECK(s == 0.0);
}

TEST_CASE("grids span the unit interval inclusively") {
    const CoordinateGrid g = resin::make_grid(5, 22050);
    REQUIRE(g.times.size() == 5);
    CHECK(g.nominal_rate == 22050);
    CHECK(g.times[0] == 0.0);
    CHECK(g.times[2] == 0.5);
    CHECK(g.times[4] == 1.0);
    CHECK(thrown_code([] { resin::make_grid(1, 8000); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("retargeted grid sizes round to the nearest sample") {
    CHECK(resin::retargeted_sample_count(32768, 22050, 8000) == 11889);
    CHECK(resin::retargeted_sample_count(2048, 16000, 16000) == 2048);
    CHECK(resin::retargeted_sample_count(2048, 16000, 32000) == 4096);
    CHECK(resin::retargeted_sample_count(2048, 16000, 8000) == 1024);
    CHECK(thrown_code([] { resin::retargeted_sample_count(100, 0, 8000); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("weight files round trip byte for byte") {
    oracle::TempDir dir("hsir");
    TargetNetParams p = random_params({2, {6, 5}}, 23);
    snap_f32(p.theta);

    const auto bytes = resin::serialize_params(p);
    // magic, version, L, layer count, two widths, then float32 payload
    REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 8 + 4 * p.theta.size());
    CHECK(bytes[0] == 'H');
    CHECK(bytes[1] == 'S');
    CHECK(bytes[2] == 'I');
    CHECK(bytes[3] == 'R');

    const TargetNetParams q = resin::deserialize_params(bytes);
    CHECK(q.config == p.config);
    REQUIRE(q.theta.size() == p.theta.size());
    for (std::size_t i = 0; i < p.theta.size(); ++i) CHECK(q.theta[i] == p.theta[i]);
    CHECK(resin::serialize_params(q) == bytes);

    resin::save_params(p, dir.file("w.hsir"));
    CHECK(slurp(dir.file("w.hsir")) == bytes);
    const TargetNetParams r = resin::load_params(dir.file("w.hsir"));
    CHECK(r.config == p.config);
    CHECK(r.theta == q.theta);
}

TEST_CASE("weight files reject corruption") {
    oracle::TempDir dir("hsir");
    TargetNetParams p = random_params({2, {4}}, 29);
    snap_f32(p.theta);
    auto bytes = resin::serialize_params(p);

    auto bad = bytes;
    bad[0] = 'X';
    spit(dir.file("m.hsir"), bad);
    CHECK(thrown_code([&] { resin::load_params(dir.file("m.hsir")); }) == ErrorCode::BadMagic);

    bad = bytes;
    bad[4] = 99;
    spit(dir.file("v.hsir"), bad);
    CHECK(thrown_code([&] { resin::load_params(dir.file("v.hsir")); }) ==
          ErrorCode::VersionMismatch);

    bad.assign(bytes.begin(), bytes.begin() + 10);
    spit(dir.file("t.hsir"), bad);
    CHECK(thrown_code([&] { resin::load_params(dir.file("t.hsir")); }) ==
          ErrorCode::CorruptHeader);

    bad = bytes;
    bad.pop_back();
    spit(dir.file("p.hsir"), bad);
    CHECK(thrown_code([&] { resin::load_params(dir.file("p.hsir")); }) ==
          ErrorCode::DimensionMismatch);

    CHECK(thrown_code([&] { resin::load_params(dir.file("gone.hsir")); }) == ErrorCode::IoError);
}

TEST_CASE("forward rejects mismatched theta") {
    TargetNetParams p = random_params({2, {4}}, 31);
    p.theta.pop_back();
    CHECK(thrown_code([&] { resin::forward(p, 0.5); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("batched forward matches the scalar path") {
    const TargetNetParams p = random_params({3, {7, 6}}, 37);
    const CoordinateGrid g = resin::make_grid(33, 16000);
    const auto cache = resin::forward_batch(p, g.times);
    REQUIRE(cache.output.size() == 33);
    for (std::size_t i = 0; i < g.times.size(); ++i) {
        CHECK(cache.output[i] ==
              doctest::Approx(resin::forward(p, g.times[i])).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("weight gradients match finite differences") {
    TargetNetParams p = random_params({2, {6, 5}}, 41);
    std::vector<double> times;
    std::mt19937_64 gen(42);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < 9; ++i) times.push_back(dist(gen));
    std::vector<double> weights(times.size());
    for (double& w : weights) w = dist(gen) - 0.5;

    const auto loss = [&](const TargetNetParams& q) {
        const auto cache = resin::forward_batch(q, times);
        double acc = 0.0;
        for (std::size_t i = 0; i < times.size(); ++i) acc += weights[i] * cache.output[i];
        return acc;
    };

    const auto cache = resin::forward_batch(p, times);
    std::vector<double> grad(p.theta.size(), 0.0);
    resin::backward_batch(p, times, cache, weights, grad);

    const double h = 1e-5;
    for (std::size_t c = 0; c < p.theta.size(); ++c) {
        TargetNetParams q = p;
        q.theta[c] = p.theta[c] + h;
        const double up = loss(q);
        q.theta[c] = p.theta[c] - h;
        const double down = loss(q);
        const double fd = (up - down) / (2.0 * h);
        CHECK(oracle::rel_err(grad[c], fd, 1e-8) < 1e-4);
    }
}

TEST_CASE("gradients accumulate and the output bias gradient is the grad weight") {
    const TargetNetParams p = random_params({2, {3}}, 47);
    const std::vector<double> times = {0.3};
    const auto cache = resin::forward_batch(p, times);

    std::vector<double> grad(p.theta.size(), 1.0);
    resin::backward_batch(p, times, cache, {2.5}, grad);
    // Last coordinate is the output bias; d(out)/d(bias) = 1, accumulated on top
    // of the preexisting 1.0.
    CHECK(grad.back() == doctest::Approx(3.5).epsilon(1e-12));
}
