#pragma once

// VXG voxel files: one JSON header line, then nx*ny*nz raw label bytes (x-fastest).

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "celldiv/label_grid.hpp"

namespace celldiv {

enum class VxgKind { mask, division };

struct VxgFile {
    LabelGrid grid;
    VxgKind kind = VxgKind::mask;
};

inline std::string vxg_header(const LabelGrid& grid, VxgKind kind) {
    nlohmann::ordered_json h;
    h["magic"] = "VXG1";
    h["dims"] = {grid.dims().nx, grid.dims().ny, grid.dims().nz};
    h["voxel_size_um"] = grid.voxel_size();
    h["labels"] = kind == VxgKind::mask ? "mask" : "division";
    return h.dump();
}

inline void write_vxg(std::ostream& os, const LabelGrid& grid, VxgKind kind) {
    os << vxg_header(grid, kind) << '\n';
    const auto bytes = grid.labels();
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!os) fail(ErrorKind::io, "failed writing VXG payload");
}

inline void write_vxg(const std::filesystem::path& path, const LabelGrid& grid, VxgKind kind) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    write_vxg(os, grid, kind);
}

inline VxgFile read_vxg(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorKind::corrupt_file, "missing VXG header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad VXG header: ") + e.what());
    }
    if (!h.is_object() || h.value("magic", "") != "VXG1") fail(ErrorKind::version_mismatch, "not a VXG1 file");
    try {
        const auto& d = h.at("dims");
        Dims dims{d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) fail(ErrorKind::corrupt_file, "VXG dims must be >= 1");
        const double vs = h.at("voxel_size_um").get<double>();
        const std::string kind_str = h.at("labels").get<std::string>();
        VxgKind kind;
        if (kind_str == "mask")
            kind = VxgKind::mask;
        else if (kind_str == "division")
            kind = VxgKind::division;
        else
            fail(ErrorKind::corrupt_file, "unknown VXG label kind '" + kind_str + "'");

        std::vector<std::uint8_t> bytes(dims.size());
        is.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
        if (std::size_t(is.gcount()) != bytes.size()) fail(ErrorKind::corrupt_file, "truncated VXG payload");
        if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::corrupt_file, "trailing bytes after VXG payload");
        const std::uint8_t max_label = kind == VxgKind::mask ? 1 : 2;
        for (auto b : bytes)
            if (b > max_label) fail(ErrorKind::corrupt_file, "label out of range for VXG kind");
        return {LabelGrid(dims, std::move(bytes), vs), kind};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad VXG header: ") + e.what());
    }
}

inline VxgFile read_vxg(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::io, "cannot open " + path.string());
    return read_vxg(is);
}

} // namespace celldiv
