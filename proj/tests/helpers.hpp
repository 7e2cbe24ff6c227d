#pragma once

#include <resin/audio.hpp>
#include <resin/errors.hpp>

#include <cstdint>
#include <random>
#include <vector>

namespace testing {

// Runs f and reports which library error it raised, if any.
template <typename F>
resin::ErrorCode thrown_code(F&& f) {
    try {
        f();
    } catch (const resin::Error& e) {
        return e.code();
    }
    return static_cast<resin::ErrorCode>(-1);
}

inline resin::AudioBuffer make_buffer(std::vector<double> samples, int rate) {
    resin::AudioBuffer b;
    b.samples = std::move(samples);
    b.sample_rate = rate;
    return b;
}

inline resin::AudioBuffer random_buffer(std::size_t n, int rate, std::uint64_t seed,
                                        double amp = 0.5) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    resin::AudioBuffer b;
    b.sample_rate = rate;
    b.samples.resize(n);
    for (double& s : b.samples) s = dist(gen);
    return b;
}

} // namespace testing
