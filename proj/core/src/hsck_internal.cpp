#include "hsck_internal.hpp"

#include "resin/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace resin::detail {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t& pos) {
    if (pos + 4 > b.size()) raise(ErrorCode::CorruptHeader, "checkpoint truncated");
    std::uint32_t v = static_cast<std::uint32_t>(b[pos]) |
                      (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(b[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(b[pos + 3]) << 24);
    pos += 4;
    return v;
}

} // namespace

void write_hsck(const std::string& path, const nlohmann::json& config,
                const std::vector<double>& flat) {
    const std::string text = config.dump();
    std::vector<std::uint8_t> out;
    out.reserve(12 + text.size() + flat.size() * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (double v : flat) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) raise(ErrorCode::CheckpointIoError, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) raise(ErrorCode::CheckpointIoError, "short write to " + path);
}

HsckFile read_hsck(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCode::CheckpointIoError, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        raise(ErrorCode::BadMagic, "not a checkpoint file: " + path);
    }
    std::size_t pos = 4;
    const std::uint32_t version = get_u32(bytes, pos);
    if (version != kVersion) raise(ErrorCode::VersionMismatch, "unsupported checkpoint version");
    const std::uint32_t json_len = get_u32(bytes, pos);
    if (pos + json_len > bytes.size()) raise(ErrorCode::CorruptHeader, "checkpoint truncated");
    HsckFile file;
    try {
        file.config = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                            bytes.begin() + static_cast<std::ptrdiff_t>(pos + json_len));
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorCode::CorruptHeader, std::string("bad checkpoint config block: ") + e.what());
    }
    pos += json_len;
    if ((bytes.size() - pos) % 4 != 0) raise(ErrorCode::CorruptHeader, "ragged checkpoint payload");
    const std::size_t count = (bytes.size() - pos) / 4;
    file.flat.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        file.flat[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, pos)));
    }
    return file;
}

} // namespace resin::detail
