#pragma once

// MUNET1 checkpoints: one JSON line (config + tensor directory), then the
// parameters as raw little-endian float32 in directory order.

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "celldiv/nn/unet.hpp"

namespace celldiv::nn {

inline constexpr const char* kCheckpointMagic = "MUNET1";

inline nlohmann::ordered_json config_to_json(const UNetConfig& c) {
    nlohmann::ordered_json j;
    j["depth"] = c.depth;
    j["base_channels"] = c.base_channels;
    j["convs_per_level"] = c.convs_per_level;
    j["max_groups"] = c.max_groups;
    j["in_channels"] = c.in_channels;
    j["out_channels"] = c.out_channels;
    j["kernel"] = c.kernel;
    return j;
}

inline UNetConfig config_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.depth = j.at("depth").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.convs_per_level = j.at("convs_per_level").get<int>();
    c.max_groups = j.at("max_groups").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.out_channels = j.at("out_channels").get<int>();
    c.kernel = j.at("kernel").get<int>();
    return c;
}

struct Checkpoint {
    MaskedUNet<float> model;
    nlohmann::json metadata; // free-form training info
};

inline void save_checkpoint(std::ostream& os, const MaskedUNet<float>& model,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
    nlohmann::ordered_json h;
    h["magic"] = kCheckpointMagic;
    h["config"] = config_to_json(model.config());
    std::size_t offset = 0;
    auto dir = nlohmann::ordered_json::array();
    for (const auto& p : model.params()) {
        nlohmann::ordered_json t;
        t["name"] = p.name;
        t["shape"] = p.shape;
        t["offset"] = offset;
        t["count"] = p.size();
        offset += p.size() * 4;
        dir.push_back(t);
    }
    h["tensors"] = dir;
    h["data_bytes"] = offset;
    h["metadata"] = metadata;
    os << h.dump() << '\n';
    std::string buf(offset, '\0');
    std::size_t at = 0;
    for (const auto& p : model.params())
        for (float v : p.value) {
            const auto u = std::bit_cast<std::uint32_t>(v);
            for (int k = 0; k < 4; ++k) buf[at++] = char((u >> (8 * k)) & 0xffu);
        }
    os.write(buf.data(), std::streamsize(buf.size()));
    if (!os) fail(ErrorKind::io, "failed writing checkpoint");
}

inline void save_checkpoint(const std::filesystem::path& path, const MaskedUNet<float>& model,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    save_checkpoint(os, model, metadata);
}

inline Checkpoint load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorKind::corrupt_file, "missing checkpoint header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad checkpoint header: ") + e.what());
    }
    if (!h.is_object() || !h.contains("magic") || !h["magic"].is_string() || h["magic"] != kCheckpointMagic)
        fail(ErrorKind::version_mismatch, "not a MUNET1 checkpoint");
    try {
        UNetConfig cfg = config_from_json(h.at("config"));
        MaskedUNet<float> model(cfg, 0);
        const auto& dir = h.at("tensors");
        if (dir.size() != model.params().size()) fail(ErrorKind::corrupt_file, "tensor directory does not match config");
        const std::size_t bytes = h.at("data_bytes").get<std::size_t>();
        std::string buf(bytes, '\0');
        is.read(buf.data(), std::streamsize(bytes));
        if (std::size_t(is.gcount()) != bytes) fail(ErrorKind::corrupt_file, "truncated checkpoint payload");
        if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::corrupt_file, "trailing bytes after checkpoint payload");
        for (std::size_t i = 0; i < dir.size(); ++i) {
            auto& p = model.params()[i];
            const auto& t = dir[i];
            if (t.at("name").get<std::string>() != p.name || t.at("shape").get<std::vector<int>>() != p.shape ||
                t.at("count").get<std::size_t>() != p.size())
                fail(ErrorKind::corrupt_file, "tensor '" + p.name + "' does not match config");
            const std::size_t off = t.at("offset").get<std::size_t>();
            if (off + 4 * p.size() > bytes) fail(ErrorKind::corrupt_file, "tensor '" + p.name + "' out of range");
            for (std::size_t j = 0; j < p.size(); ++j) {
                std::uint32_t u = 0;
                for (int k = 0; k < 4; ++k) u |= std::uint32_t(std::uint8_t(buf[off + 4 * j + std::size_t(k)])) << (8 * k);
                p.value[j] = std::bit_cast<float>(u);
            }
        }
        return {std::move(model), h.value("metadata", nlohmann::json::object())};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad checkpoint header: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_argument) fail(ErrorKind::corrupt_file, e.what());
        throw;
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::io, "cannot open " + path.string());
    return load_checkpoint(is);
}

} // namespace celldiv::nn
