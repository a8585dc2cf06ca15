#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "celldiv/errors.hpp"

namespace celldiv {

inline constexpr double kDefaultVoxelSizeUm = 0.35;

struct Dims {
    int nx = 1;
    int ny = 1;
    int nz = 1;

    std::size_t size() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
    bool operator==(const Dims&) const = default;
};

struct Index3 {
    int x = 0;
    int y = 0;
    int z = 0;
    bool operator==(const Index3&) const = default;
};

/// Dense 3D lattice of 8-bit labels, x-fastest then y then z.
class LabelGrid {
public:
    LabelGrid() : LabelGrid(Dims{1, 1, 1}) {}

    explicit LabelGrid(Dims dims, double voxel_size = kDefaultVoxelSizeUm)
        : dims_(dims), voxel_size_(voxel_size) {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            fail(ErrorKind::invalid_argument, "grid dims must be >= 1");
        labels_.assign(dims.size(), 0);
    }

    LabelGrid(Dims dims, std::vector<std::uint8_t> labels, double voxel_size = kDefaultVoxelSizeUm)
        : dims_(dims), voxel_size_(voxel_size), labels_(std::move(labels)) {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            fail(ErrorKind::invalid_argument, "grid dims must be >= 1");
        if (labels_.size() != dims.size())
            fail(ErrorKind::shape_mismatch, "label array length does not match dims");
    }

    const Dims& dims() const { return dims_; }
    double voxel_size() const { return voxel_size_; }
    std::size_t size() const { return labels_.size(); }

    std::size_t index(int x, int y, int z) const {
        return (std::size_t(z) * std::size_t(dims_.ny) + std::size_t(y)) * std::size_t(dims_.nx) + std::size_t(x);
    }
    Index3 coords(std::size_t i) const {
        const auto nx = std::size_t(dims_.nx), ny = std::size_t(dims_.ny);
        return {int(i % nx), int((i / nx) % ny), int(i / (nx * ny))};
    }
    bool contains(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims_.nx && y < dims_.ny && z < dims_.nz;
    }

    std::uint8_t operator()(int x, int y, int z) const { return labels_[index(x, y, z)]; }
    std::uint8_t& operator()(int x, int y, int z) { return labels_[index(x, y, z)]; }
    std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
    std::uint8_t& operator[](std::size_t i) { return labels_[i]; }

    std::span<const std::uint8_t> labels() const { return labels_; }
    std::span<std::uint8_t> labels() { return labels_; }

    std::size_t count(std::uint8_t label) const {
        std::size_t n = 0;
        for (auto v : labels_) n += (v == label);
        return n;
    }
    std::size_t foreground_count() const { return labels_.size() - count(0); }
    std::uint8_t max_label() const {
        std::uint8_t m = 0;
        for (auto v : labels_) m = v > m ? v : m;
        return m;
    }

    bool operator==(const LabelGrid& o) const {
        return dims_ == o.dims_ && voxel_size_ == o.voxel_size_ && labels_ == o.labels_;
    }

private:
    Dims dims_;
    double voxel_size_;
    std::vector<std::uint8_t> labels_;
};

/// Binary copy of a grid: every nonzero label becomes 1.
inline LabelGrid binarize(const LabelGrid& grid) {
    LabelGrid out(grid.dims(), grid.voxel_size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i] != 0 ? 1 : 0;
    return out;
}

/// Mother-cell partition into daughters 1 and 2 (0 is background).
class DivisionPattern {
public:
    explicit DivisionPattern(LabelGrid grid) : grid_(std::move(grid)) { validate(grid_); }

    static void validate(const LabelGrid& grid) {
        bool has1 = false, has2 = false;
        for (auto v : grid.labels()) {
            if (v > 2) fail(ErrorKind::degenerate_pattern, "division pattern labels must be in {0,1,2}");
            has1 |= v == 1;
            has2 |= v == 2;
        }
        if (!has1 || !has2) fail(ErrorKind::degenerate_pattern, "division pattern needs both daughter labels");
    }
    static bool is_valid(const LabelGrid& grid) {
        try {
            validate(grid);
            return true;
        } catch (const Error&) {
            return false;
        }
    }

    const LabelGrid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims(); }

    bool operator==(const DivisionPattern& o) const { return grid_ == o.grid_; }

private:
    LabelGrid grid_;
};

/// 6-neighbourhood offsets.
inline constexpr std::array<std::array<int, 3>, 6> kFaceOffsets{{
    {-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1},
}};

} // namespace celldiv
