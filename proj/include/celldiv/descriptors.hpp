#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "celldiv/label_grid.hpp"

namespace celldiv {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct ShapeDescriptor {
    std::size_t volume = 0;
    Vec3 centroid = Vec3::Zero();
    std::array<Vec3, 3> axes{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    std::array<double, 3> axis_lengths{0.0, 0.0, 0.0};
    std::array<double, 3> eigenvalues{0.0, 0.0, 0.0};
    double elongation = 1.0;
    double flatness = 1.0;
};

/// First nonzero component made positive; near-zero components snapped to 0.
inline Vec3 canonical_axis(Vec3 v) {
    for (int i = 0; i < 3; ++i)
        if (std::abs(v[i]) < 1e-12) v[i] = 0.0;
    v.normalize();
    for (int i = 0; i < 3; ++i) {
        if (v[i] != 0.0) {
            if (v[i] < 0.0) v = -v;
            break;
        }
    }
    return v;
}

inline bool lexicographically_less(const Vec3& a, const Vec3& b) {
    for (int i = 0; i < 3; ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

/// Principal-axis descriptors of the nonzero voxels of a grid.
inline ShapeDescriptor shape_descriptors(const LabelGrid& mask) {
    ShapeDescriptor d;
    Vec3 sum = Vec3::Zero();
    std::size_t n = 0;
    const auto& dims = mask.dims();
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x)
                if (mask(x, y, z) != 0) {
                    sum += Vec3(x, y, z);
                    ++n;
                }
    if (n == 0) fail(ErrorKind::empty_mask, "shape descriptors of an empty mask");
    d.volume = n;
    d.centroid = sum / double(n);

    Mat3 cov = Mat3::Zero();
    for (int z = 0; z < dims.nz; ++z)
        for (int y = 0; y < dims.ny; ++y)
            for (int x = 0; x < dims.nx; ++x)
                if (mask(x, y, z) != 0) {
                    const Vec3 r = Vec3(x, y, z) - d.centroid;
                    cov += r * r.transpose();
                }
    cov /= double(n);

    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const auto& evals = solver.eigenvalues();
    const auto& evecs = solver.eigenvectors();
    for (int k = 0; k < 3; ++k) {
        const int src = 2 - k; // descending
        d.eigenvalues[k] = std::max(evals[src], 0.0);
        d.axis_lengths[k] = std::sqrt(d.eigenvalues[k]);
        d.axes[k] = canonical_axis(evecs.col(src));
    }
    const double scale = std::max(d.eigenvalues[0], 1e-300);
    for (auto& len : d.axis_lengths)
        if (len * len < 1e-12 * scale) len = 0.0;
    d.elongation = d.axis_lengths[1] > 0.0 ? d.axis_lengths[0] / d.axis_lengths[1] : 1.0;
    d.flatness = d.axis_lengths[2] > 0.0 ? d.axis_lengths[1] / d.axis_lengths[2] : 1.0;
    return d;
}

} // namespace celldiv
