#pragma once

// Synthetic mother cells: axis-aligned cuboids and ellipsoids rasterized from
// (elongation, flatness, volume).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "celldiv/label_grid.hpp"

namespace celldiv {

enum class ShapeKind { cuboid, ellipsoid };

inline const char* to_string(ShapeKind k) { return k == ShapeKind::cuboid ? "cuboid" : "ellipsoid"; }

inline ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "cuboid") return ShapeKind::cuboid;
    if (s == "ellipsoid") return ShapeKind::ellipsoid;
    fail(ErrorKind::invalid_argument, "unknown shape kind '" + s + "'");
}

struct ShapeSpec {
    ShapeKind kind = ShapeKind::cuboid;
    double e = 1.0;
    double f = 1.0;
    double v = 27000.0;
    std::uint64_t seed = 0;
};

/// Uniform sampling box for (e, f, v). max_extent > 0 rejects specs whose
/// longest full extent exceeds it.
struct SamplingRanges {
    double e_min = 1.0, e_max = 3.0;
    double f_min = 1.0, f_max = 3.0;
    double v_min = 24000.0, v_max = 120000.0;
    double max_extent = 0.0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Per-item seed derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t item) {
    return splitmix64(splitmix64(master) ^ (item + 0x632BE59BD9B4E019ull));
}

/// Cuboid full edge lengths (a, b, c), a*b*c = v.
inline std::array<double, 3> cuboid_edges(double e, double f, double v) {
    const double a = std::cbrt(f * v * e * e);
    const double b = a / e;
    return {a, b, b / f};
}

/// Ellipsoid half-axes (a, b, c), (4/3)*pi*a*b*c = v.
inline std::array<double, 3> ellipsoid_half_axes(double e, double f, double v) {
    const double a = std::cbrt(3.0 * f * v * e * e / (4.0 * std::numbers::pi));
    return {a, a / e, a / (e * f)};
}

inline double longest_extent(const ShapeSpec& s) {
    return s.kind == ShapeKind::cuboid ? cuboid_edges(s.e, s.f, s.v)[0] : 2.0 * ellipsoid_half_axes(s.e, s.f, s.v)[0];
}

namespace detail {

inline void check_spec(const ShapeSpec& s, ShapeKind expected) {
    if (s.kind != expected) fail(ErrorKind::invalid_spec, "shape kind mismatch");
    if (!(s.e >= 1.0) || !(s.f >= 1.0) || !std::isfinite(s.e) || !std::isfinite(s.f))
        fail(ErrorKind::invalid_spec, "elongation and flatness must be finite and >= 1");
    if (!(s.v > 0.0) || !std::isfinite(s.v)) fail(ErrorKind::invalid_spec, "volume must be positive");
}

// Integer edge counts for a cuboid. Plain rounding unless that misses the
// volume by more than 3%; then the +-1 neighbourhood is searched for the
// smallest shape distortion that meets the volume tolerance.
inline std::array<int, 3> cuboid_voxel_edges(const std::array<double, 3>& edges, double e, double f, double v) {
    constexpr double kVolTol = 0.03;
    auto vol_err = [v](int n1, int n2, int n3) { return std::abs(double(n1) * n2 * n3 - v) / v; };
    std::array<int, 3> base{};
    for (int i = 0; i < 3; ++i) base[i] = std::max(1, int(std::lround(edges[i])));
    if (vol_err(base[0], base[1], base[2]) <= kVolTol) return base;

    std::array<int, 3> best = base;
    double best_shape = std::numeric_limits<double>::infinity();
    double best_vol = vol_err(base[0], base[1], base[2]);
    auto lo = [&](int i) { return std::max(1, int(std::floor(edges[i])) - 1); };
    auto hi = [&](int i) { return int(std::ceil(edges[i])) + 1; };
    for (int n1 = lo(0); n1 <= hi(0); ++n1)
        for (int n2 = lo(1); n2 <= hi(1); ++n2)
            for (int n3 = lo(2); n3 <= hi(2); ++n3) {
                const double ve = vol_err(n1, n2, n3);
                const double se = ve <= kVolTol
                    ? std::max(std::abs(double(n1) / n2 / e - 1.0), std::abs(double(n2) / n3 / f - 1.0))
                    : std::numeric_limits<double>::infinity();
                if (se < best_shape || (se == best_shape && ve < best_vol)) {
                    best = {n1, n2, n3};
                    best_shape = se;
                    best_vol = ve;
                }
            }
    return best;
}

} // namespace detail

inline LabelGrid generate_cuboid(const ShapeSpec& spec, int margin = 2) {
    detail::check_spec(spec, ShapeKind::cuboid);
    const auto edges = cuboid_edges(spec.e, spec.f, spec.v);
    if (edges[2] < 4.0) fail(ErrorKind::invalid_spec, "cuboid too small to rasterize (edge < 4 voxels)");
    const auto n = detail::cuboid_voxel_edges(edges, spec.e, spec.f, spec.v);
    LabelGrid grid(Dims{n[0] + 2 * margin, n[1] + 2 * margin, n[2] + 2 * margin});
    for (int z = 0; z < n[2]; ++z)
        for (int y = 0; y < n[1]; ++y)
            for (int x = 0; x < n[0]; ++x) grid(x + margin, y + margin, z + margin) = 1;
    return grid;
}

inline LabelGrid generate_ellipsoid(const ShapeSpec& spec, int margin = 2) {
    detail::check_spec(spec, ShapeKind::ellipsoid);
    const auto h = ellipsoid_half_axes(spec.e, spec.f, spec.v);
    if (2.0 * h[2] < 4.0) fail(ErrorKind::invalid_spec, "ellipsoid too small to rasterize (axis < 4 voxels)");

    // Odd extents centre the ellipsoid on a voxel, even extents between voxels;
    // keep the parity combination whose voxel count is closest to v.
    auto rasterize = [&](const std::array<int, 3>& parity) {
        std::array<int, 3> n{};
        std::array<double, 3> c{};
        for (int i = 0; i < 3; ++i) {
            n[i] = 2 * int(std::ceil(h[i])) + 1 + parity[i] + 2 * margin;
            c[i] = 0.5 * (n[i] - 1);
        }
        LabelGrid grid(Dims{n[0], n[1], n[2]});
        for (int z = 0; z < n[2]; ++z) {
            const double dz = (z - c[2]) / h[2];
            for (int y = 0; y < n[1]; ++y) {
                const double dy = (y - c[1]) / h[1];
                const double r2 = dz * dz + dy * dy;
                if (r2 > 1.0) continue;
                for (int x = 0; x < n[0]; ++x) {
                    const double dx = (x - c[0]) / h[0];
                    if (dx * dx + r2 <= 1.0) grid(x, y, z) = 1;
                }
            }
        }
        return grid;
    };

    LabelGrid best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int p = 0; p < 8; ++p) {
        auto g = rasterize({p & 1, (p >> 1) & 1, (p >> 2) & 1});
        const double err = std::abs(double(g.foreground_count()) - spec.v);
        if (err < best_err) {
            best_err = err;
            best = std::move(g);
        }
    }
    return best;
}

inline LabelGrid generate_shape(const ShapeSpec& spec, int margin = 2) {
    return spec.kind == ShapeKind::cuboid ? generate_cuboid(spec, margin) : generate_ellipsoid(spec, margin);
}

/// n i.i.d. specs from uniform (e, f, v) ranges; reproducible per seed.
inline std::vector<ShapeSpec> sample_dataset(ShapeKind kind, std::size_t n, std::uint64_t seed,
                                             const SamplingRanges& r = {}) {
    if (n < 1) fail(ErrorKind::invalid_argument, "sample_dataset needs n >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ue(r.e_min, r.e_max), uf(r.f_min, r.f_max), uv(r.v_min, r.v_max);
    std::vector<ShapeSpec> specs;
    specs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ShapeSpec s;
        s.kind = kind;
        for (int attempt = 0;; ++attempt) {
            s.e = ue(rng);
            s.f = uf(rng);
            s.v = uv(rng);
            if (r.max_extent <= 0.0 || longest_extent(s) <= r.max_extent) break;
            if (attempt > 100000) fail(ErrorKind::invalid_argument, "sampling ranges cannot satisfy max_extent");
        }
        s.seed = derive_seed(seed, i);
        specs.push_back(s);
    }
    return specs;
}

} // namespace celldiv
