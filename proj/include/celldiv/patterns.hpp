#pragma once

// Operations on division patterns (labels 0 = background, 1 and 2 = daughters).

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "celldiv/label_grid.hpp"

namespace celldiv {

/// Daughters 1 and 2 merged back into a binary mother mask.
inline LabelGrid merge_daughters(const LabelGrid& pattern) { return binarize(pattern); }
inline LabelGrid merge_daughters(const DivisionPattern& pattern) { return binarize(pattern.grid()); }

struct InterfaceFaces {
    std::size_t count = 0;
    /// (lower index, higher index) voxel pairs in increasing order of the lower index, then axis.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// 6-neighbour faces separating label 1 from label 2.
inline InterfaceFaces interface_area(const LabelGrid& pattern, bool collect_pairs = true) {
    InterfaceFaces out;
    const auto& d = pattern.dims();
    const std::size_t sx = 1, sy = std::size_t(d.nx), sz = std::size_t(d.nx) * std::size_t(d.ny);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = pattern.index(x, y, z);
                const auto a = pattern[i];
                if (a != 1 && a != 2) continue;
                auto visit = [&](std::size_t j) {
                    const auto b = pattern[j];
                    if ((b == 1 || b == 2) && b != a) {
                        ++out.count;
                        if (collect_pairs) out.pairs.emplace_back(i, j);
                    }
                };
                if (x + 1 < d.nx) visit(i + sx);
                if (y + 1 < d.ny) visit(i + sy);
                if (z + 1 < d.nz) visit(i + sz);
            }
    return out;
}
inline InterfaceFaces interface_area(const DivisionPattern& p, bool collect_pairs = true) {
    return interface_area(p.grid(), collect_pairs);
}

/// min(|1|, |2|) / (|1| + |2|).
inline double volume_ratio(const LabelGrid& pattern) {
    const double n1 = double(pattern.count(1)), n2 = double(pattern.count(2));
    if (n1 + n2 == 0.0) return 0.0;
    return std::min(n1, n2) / (n1 + n2);
}
inline double volume_ratio(const DivisionPattern& p) { return volume_ratio(p.grid()); }

/// 1 <-> 2, background fixed: y' = y/2 * (7 - 3y).
inline LabelGrid swap_labels(const LabelGrid& pattern) {
    LabelGrid out = pattern;
    for (auto& v : out.labels()) {
        if (v == 1 || v == 2) v = std::uint8_t(v * (7 - 3 * v) / 2);
    }
    return out;
}
inline DivisionPattern swap_labels(const DivisionPattern& p) { return DivisionPattern(swap_labels(p.grid())); }

/// Moves the interface by eroding daughter `side` k times toward the other
/// daughter; eroded voxels join the other daughter.
inline DivisionPattern shift_plane_by_erosion(const DivisionPattern& pattern, int k, int side) {
    if (k < 0) fail(ErrorKind::invalid_argument, "erosion count must be >= 0");
    if (side != 1 && side != 2) fail(ErrorKind::invalid_argument, "erosion side must be 1 or 2");
    LabelGrid grid = pattern.grid();
    const std::uint8_t self = std::uint8_t(side), other = std::uint8_t(3 - side);
    const auto& d = grid.dims();
    std::vector<std::size_t> flip;
    for (int it = 0; it < k; ++it) {
        flip.clear();
        for (int z = 0; z < d.nz; ++z)
            for (int y = 0; y < d.ny; ++y)
                for (int x = 0; x < d.nx; ++x) {
                    if (grid(x, y, z) != self) continue;
                    for (const auto& o : kFaceOffsets) {
                        const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                        if (grid.contains(nx, ny, nz) && grid(nx, ny, nz) == other) {
                            flip.push_back(grid.index(x, y, z));
                            break;
                        }
                    }
                }
        for (auto i : flip) grid[i] = other;
        if (grid.count(self) == 0) fail(ErrorKind::degenerate_pattern, "erosion annihilated a daughter");
    }
    return DivisionPattern(std::move(grid));
}

/// 6-connected components of voxels carrying `label`; returns component id per
/// voxel (-1 elsewhere) and component sizes.
inline std::pair<std::vector<int>, std::vector<std::size_t>> label_components(const LabelGrid& grid,
                                                                              std::uint8_t label) {
    std::vector<int> comp(grid.size(), -1);
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < grid.size(); ++seed) {
        if (grid[seed] != label || comp[seed] >= 0) continue;
        const int id = int(sizes.size());
        sizes.push_back(0);
        comp[seed] = id;
        stack.push_back(seed);
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            ++sizes.back();
            const auto c = grid.coords(i);
            for (const auto& o : kFaceOffsets) {
                const int x = c.x + o[0], y = c.y + o[1], z = c.z + o[2];
                if (!grid.contains(x, y, z)) continue;
                const auto j = grid.index(x, y, z);
                if (grid[j] == label && comp[j] < 0) {
                    comp[j] = id;
                    stack.push_back(j);
                }
            }
        }
    }
    return {std::move(comp), std::move(sizes)};
}

} // namespace celldiv
