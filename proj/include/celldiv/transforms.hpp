#pragma once

// Grid transforms: padding, cropping, nearest-neighbour rotation and scaling.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "celldiv/descriptors.hpp"
#include "celldiv/label_grid.hpp"

namespace celldiv {

struct Margins {
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{0, 0, 0};

    static Margins uniform(int m) { return {{m, m, m}, {m, m, m}}; }
};

struct Box {
    Index3 lo;
    Index3 hi; // inclusive
};

inline LabelGrid pad(const LabelGrid& grid, const Margins& m) {
    for (int i = 0; i < 3; ++i)
        if (m.lo[i] < 0 || m.hi[i] < 0) fail(ErrorKind::invalid_argument, "padding margins must be >= 0");
    const auto& d = grid.dims();
    LabelGrid out(Dims{d.nx + m.lo[0] + m.hi[0], d.ny + m.lo[1] + m.hi[1], d.nz + m.lo[2] + m.hi[2]},
                  grid.voxel_size());
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) out(x + m.lo[0], y + m.lo[1], z + m.lo[2]) = grid(x, y, z);
    return out;
}

inline std::optional<Box> bounding_box(const LabelGrid& grid) {
    const auto& d = grid.dims();
    Box b{{d.nx, d.ny, d.nz}, {-1, -1, -1}};
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                if (grid(x, y, z) != 0) {
                    b.lo = {std::min(b.lo.x, x), std::min(b.lo.y, y), std::min(b.lo.z, z)};
                    b.hi = {std::max(b.hi.x, x), std::max(b.hi.y, y), std::max(b.hi.z, z)};
                }
    if (b.hi.x < 0) return std::nullopt;
    return b;
}

/// Sub-grid [lo, lo + dims); voxels outside the source read as 0.
inline LabelGrid extract(const LabelGrid& grid, Index3 lo, Dims dims) {
    LabelGrid out(dims, grid.voxel_size());
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x) {
                const int sx = x + lo.x, sy = y + lo.y, sz = z + lo.z;
                if (grid.contains(sx, sy, sz)) out(x, y, z) = grid(sx, sy, sz);
            }
    return out;
}

/// Tight bounding box of the foreground expanded by margin and clamped to the grid.
inline LabelGrid crop_to_bbox(const LabelGrid& grid, int margin) {
    if (margin < 0) fail(ErrorKind::invalid_argument, "crop margin must be >= 0");
    const auto box = bounding_box(grid);
    if (!box) fail(ErrorKind::empty_mask, "cannot crop an empty grid");
    const auto& d = grid.dims();
    const Index3 lo{std::max(0, box->lo.x - margin), std::max(0, box->lo.y - margin), std::max(0, box->lo.z - margin)};
    const Index3 hi{std::min(d.nx - 1, box->hi.x + margin), std::min(d.ny - 1, box->hi.y + margin),
                    std::min(d.nz - 1, box->hi.z + margin)};
    return extract(grid, lo, Dims{hi.x - lo.x + 1, hi.y - lo.y + 1, hi.z - lo.z + 1});
}

inline void check_rotation(const Mat3& r) {
    if (!r.allFinite() || (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(r.determinant() - 1.0) > 1e-6)
        fail(ErrorKind::non_orthonormal, "rotation must be orthonormal with determinant +1");
}

/// Nearest-neighbour rotation about the grid centre. The output covers the
/// rotated input box plus `margin` voxels on every face.
inline LabelGrid rotate_nearest(const LabelGrid& grid, const Mat3& rotation, int margin = 1) {
    check_rotation(rotation);
    if (margin < 0) fail(ErrorKind::invalid_argument, "rotation margin must be >= 0");
    const auto& d = grid.dims();
    const Vec3 c_in(0.5 * (d.nx - 1), 0.5 * (d.ny - 1), 0.5 * (d.nz - 1));
    const Vec3 half(0.5 * d.nx, 0.5 * d.ny, 0.5 * d.nz);
    Vec3 ext = Vec3::Zero();
    for (int s = 0; s < 8; ++s) {
        const Vec3 corner((s & 1 ? 1 : -1) * half[0], (s & 2 ? 1 : -1) * half[1], (s & 4 ? 1 : -1) * half[2]);
        ext = ext.cwiseMax((rotation * corner).cwiseAbs());
    }
    std::array<int, 3> n{};
    for (int i = 0; i < 3; ++i) n[i] = int(std::ceil(2.0 * ext[i] - 1e-9)) + 2 * margin;
    LabelGrid out(Dims{n[0], n[1], n[2]}, grid.voxel_size());
    const Vec3 c_out(0.5 * (n[0] - 1), 0.5 * (n[1] - 1), 0.5 * (n[2] - 1));
    const Mat3 inv = rotation.transpose();
    for (int z = 0; z < n[2]; ++z)
        for (int y = 0; y < n[1]; ++y)
            for (int x = 0; x < n[0]; ++x) {
                const Vec3 q = inv * (Vec3(x, y, z) - c_out) + c_in;
                const int sx = int(std::lround(q[0])), sy = int(std::lround(q[1])), sz = int(std::lround(q[2]));
                if (grid.contains(sx, sy, sz)) out(x, y, z) = grid(sx, sy, sz);
            }
    return out;
}

/// Rotation about a coordinate axis (0 = x, 1 = y, 2 = z).
inline Mat3 axis_rotation(int axis, double radians) {
    return Eigen::AngleAxisd(radians, Vec3::Unit(axis)).toRotationMatrix();
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
template <class Rng>
Mat3 random_rotation(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::Quaterniond q;
    do {
        q = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng));
    } while (q.norm() < 1e-9);
    q.normalize();
    return q.toRotationMatrix();
}

/// The 24 proper rotations of the cubic lattice as exact signed permutation matrices.
inline std::vector<Mat3> lattice_rotations() {
    std::vector<Mat3> out;
    const std::array<std::array<int, 3>, 6> perms{{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (const auto& p : perms)
        for (int s = 0; s < 8; ++s) {
            Mat3 m = Mat3::Zero();
            for (int r = 0; r < 3; ++r) m(r, p[r]) = (s >> r & 1) ? -1.0 : 1.0;
            if (m.determinant() > 0) out.push_back(m);
        }
    return out;
}

/// Nearest-neighbour isotropic rescaling by `factor`.
inline LabelGrid rescale_isotropic(const LabelGrid& grid, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) fail(ErrorKind::invalid_argument, "scale factor must be positive");
    const auto& d = grid.dims();
    const std::array<int, 3> in{d.nx, d.ny, d.nz};
    std::array<int, 3> n{};
    std::array<std::vector<int>, 3> src;
    for (int a = 0; a < 3; ++a) {
        n[a] = std::max(1, int(std::lround(in[a] * factor)));
        src[a].resize(std::size_t(n[a]));
        for (int i = 0; i < n[a]; ++i)
            src[a][std::size_t(i)] = std::clamp(int(std::floor((i + 0.5) / factor)), 0, in[a] - 1);
    }
    LabelGrid out(Dims{n[0], n[1], n[2]}, grid.voxel_size());
    for (int z = 0; z < n[2]; ++z)
        for (int y = 0; y < n[1]; ++y)
            for (int x = 0; x < n[0]; ++x)
                out(x, y, z) = grid(src[0][std::size_t(x)], src[1][std::size_t(y)], src[2][std::size_t(z)]);
    if (grid.foreground_count() > 0 && out.foreground_count() == 0)
        fail(ErrorKind::empty_mask, "rescaling produced an empty grid");
    return out;
}

} // namespace celldiv
