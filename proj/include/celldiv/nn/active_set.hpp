#pragma once

// Active-voxel index structures. Every masked activation is zero outside its
// mask, so layers only store and compute rows for in-mask voxels.

#include <array>
#include <cstdint>
#include <vector>

#include "celldiv/nn/dense_ops.hpp"

namespace celldiv::nn {

/// In-mask voxels of one pyramid level with their 3x3x3 neighbourhoods.
struct ActiveLevel {
    Dims dims;
    std::vector<std::int32_t> voxel;  // linear grid index per active row
    std::vector<std::int32_t> lookup; // grid index -> active row or -1
    std::vector<std::int32_t> nbr;    // rows * 27, tap k = (dz+1)*9 + (dy+1)*3 + (dx+1); -1 if inactive or outside

    // Relation to the next coarser level (empty at the coarsest level).
    std::vector<std::int32_t> parent;        // active row at level+1 for each row here
    std::vector<std::int32_t> child_offsets; // CSR over level+1 rows
    std::vector<std::int32_t> children;      // active rows here
    std::vector<std::uint8_t> has_masked_child; // level+1 row has an in-grid child outside the mask

    std::size_t rows() const { return voxel.size(); }
};

namespace detail {

inline void build_neighbours(ActiveLevel& lv) {
    const Dims d = lv.dims;
    lv.nbr.assign(lv.rows() * 27, -1);
    for (std::size_t r = 0; r < lv.rows(); ++r) {
        const int v = lv.voxel[r];
        const int x = v % d.nx, y = (v / d.nx) % d.ny, z = v / (d.nx * d.ny);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ix = x + dx, iy = y + dy, iz = z + dz;
                    if (ix < 0 || iy < 0 || iz < 0 || ix >= d.nx || iy >= d.ny || iz >= d.nz) continue;
                    const int k = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                    lv.nbr[r * 27 + std::size_t(k)] = lv.lookup[std::size_t((iz * d.ny + iy) * d.nx + ix)];
                }
    }
}

} // namespace detail

/// Mask pyramid as active sets: level 0 from the mask, each next level the 2x max-pool.
inline std::vector<ActiveLevel> build_active_pyramid(const std::vector<std::uint8_t>& mask, Dims dims, int levels) {
    std::vector<ActiveLevel> out(static_cast<std::size_t>(levels));
    {
        auto& lv = out[0];
        lv.dims = dims;
        lv.lookup.assign(dims.size(), -1);
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i] != 0) {
                lv.lookup[i] = std::int32_t(lv.voxel.size());
                lv.voxel.push_back(std::int32_t(i));
            }
        if (lv.voxel.empty()) fail(ErrorKind::degenerate_mask, "empty mask");
        detail::build_neighbours(lv);
    }
    for (int l = 1; l < levels; ++l) {
        auto& fine = out[std::size_t(l - 1)];
        auto& coarse = out[std::size_t(l)];
        const Dims fd = fine.dims;
        coarse.dims = pooled_dims(fd);
        const Dims cd = coarse.dims;
        coarse.lookup.assign(cd.size(), -1);
        std::vector<std::uint8_t> on(cd.size(), 0);
        fine.parent.resize(fine.rows());
        for (std::size_t r = 0; r < fine.rows(); ++r) {
            const int v = fine.voxel[r];
            const int x = v % fd.nx, y = (v / fd.nx) % fd.ny, z = v / (fd.nx * fd.ny);
            on[std::size_t(((z / 2) * cd.ny + y / 2) * cd.nx + x / 2)] = 1;
        }
        for (std::size_t i = 0; i < on.size(); ++i)
            if (on[i]) {
                coarse.lookup[i] = std::int32_t(coarse.voxel.size());
                coarse.voxel.push_back(std::int32_t(i));
            }
        for (std::size_t r = 0; r < fine.rows(); ++r) {
            const int v = fine.voxel[r];
            const int x = v % fd.nx, y = (v / fd.nx) % fd.ny, z = v / (fd.nx * fd.ny);
            fine.parent[r] = coarse.lookup[std::size_t(((z / 2) * cd.ny + y / 2) * cd.nx + x / 2)];
        }
        // children in scan order of the 2x2x2 block so tie-breaking matches the dense reference
        fine.child_offsets.assign(coarse.rows() + 1, 0);
        fine.children.clear();
        fine.has_masked_child.assign(coarse.rows(), 0);
        for (std::size_t p = 0; p < coarse.rows(); ++p) {
            const int v = coarse.voxel[p];
            const int x = v % cd.nx, y = (v / cd.nx) % cd.ny, z = v / (cd.nx * cd.ny);
            for (int dz = 0; dz < 2; ++dz)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int ix = 2 * x + dx, iy = 2 * y + dy, iz = 2 * z + dz;
                        if (ix >= fd.nx || iy >= fd.ny || iz >= fd.nz) continue;
                        const int c = fine.lookup[std::size_t((iz * fd.ny + iy) * fd.nx + ix)];
                        if (c >= 0)
                            fine.children.push_back(c);
                        else
                            fine.has_masked_child[p] = 1;
                    }
            fine.child_offsets[p + 1] = std::int32_t(fine.children.size());
        }
        detail::build_neighbours(coarse);
    }
    return out;
}

} // namespace celldiv::nn
