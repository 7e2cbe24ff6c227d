#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace resin::detail {

// Checkpoint container: magic "HSCK", version u32 LE, JSON config block
// (u32 byte length + UTF-8 text), then `flat` as float32 LE. The JSON block
// describes how the flat payload is partitioned.
void write_hsck(const std::string& path, const nlohmann::json& config,
                const std::vector<double>& flat);

struct HsckFile {
    nlohmann::json config;
    std::vector<double> flat; // float32 payload widened to double
};

HsckFile read_hsck(const std::string& path);

} // namespace resin::detail
