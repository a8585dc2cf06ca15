#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "celldiv/descriptors.hpp"
#include "celldiv/division_rules.hpp"
#include "celldiv/shapes.hpp"
#include "celldiv/transforms.hpp"
#include "celldiv/vxg.hpp"

using namespace celldiv;

namespace {

LabelGrid box(int nx, int ny, int nz, int margin = 0) {
    LabelGrid g(Dims{nx + 2 * margin, ny + 2 * margin, nz + 2 * margin});
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) g(x + margin, y + margin, z + margin) = 1;
    return g;
}

LabelGrid sphere(double r) {
    const int n = int(2 * r) + 5;
    const double c = 0.5 * (n - 1);
    LabelGrid g(Dims{n, n, n});
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if ((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c) <= r * r) g(x, y, z) = 1;
    return g;
}

void expect_error(ErrorKind kind, const std::function<void()>& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

} // namespace

TEST(LabelGrid, XFastestLayout) {
    LabelGrid g(Dims{3, 4, 5});
    EXPECT_EQ(g.size(), 60u);
    EXPECT_EQ(g.index(1, 0, 0), 1u);
    EXPECT_EQ(g.index(0, 1, 0), 3u);
    EXPECT_EQ(g.index(0, 0, 1), 12u);
    const auto c = g.coords(g.index(2, 3, 4));
    EXPECT_EQ(c.x, 2);
    EXPECT_EQ(c.y, 3);
    EXPECT_EQ(c.z, 4);
    EXPECT_DOUBLE_EQ(g.voxel_size(), 0.35);
}

TEST(LabelGrid, RejectsBadDims) {
    expect_error(ErrorKind::invalid_argument, [] { LabelGrid(Dims{0, 1, 1}); });
    expect_error(ErrorKind::shape_mismatch, [] { LabelGrid(Dims{2, 2, 2}, std::vector<std::uint8_t>(7)); });
}

TEST(DivisionPattern, NeedsBothDaughters) {
    LabelGrid g = box(2, 1, 1);
    g[1] = 2;
    EXPECT_NO_THROW(DivisionPattern{g});
    g[1] = 1;
    expect_error(ErrorKind::degenerate_pattern, [&] { DivisionPattern{g}; });
    g[1] = 3;
    expect_error(ErrorKind::degenerate_pattern, [&] { DivisionPattern{g}; });
}

TEST(Vxg, RoundTripIsBitExact) {
    LabelGrid g(Dims{5, 3, 2}, 0.5);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::uint8_t(i % 3);
    std::stringstream ss;
    write_vxg(ss, g, VxgKind::division);
    const std::string bytes = ss.str();
    const auto nl = bytes.find('\n');
    EXPECT_EQ(bytes.substr(0, nl), R"({"magic":"VXG1","dims":[5,3,2],"voxel_size_um":0.5,"labels":"division"})");
    EXPECT_EQ(bytes.size(), nl + 1 + 30);
    const auto back = read_vxg(ss);
    EXPECT_EQ(back.grid, g);
    EXPECT_EQ(back.kind, VxgKind::division);
    std::stringstream again;
    write_vxg(again, back.grid, back.kind);
    EXPECT_EQ(again.str(), bytes);
}

TEST(Vxg, ReportsCorruptAndForeignFiles) {
    LabelGrid g = box(4, 4, 4);
    std::stringstream ss;
    write_vxg(ss, g, VxgKind::mask);
    std::string s = ss.str();
    std::istringstream truncated(s.substr(0, s.size() - 3));
    expect_error(ErrorKind::corrupt_file, [&] { read_vxg(truncated); });
    std::istringstream trailing(s + "x");
    expect_error(ErrorKind::corrupt_file, [&] { read_vxg(trailing); });
    std::string bad_label = s;
    bad_label.back() = 2; // mask files only hold 0/1
    std::istringstream bl(bad_label);
    expect_error(ErrorKind::corrupt_file, [&] { read_vxg(bl); });
    std::istringstream foreign(R"({"magic":"VXG9","dims":[1,1,1],"voxel_size_um":0.35,"labels":"mask"})" "\n\x01");
    expect_error(ErrorKind::version_mismatch, [&] { read_vxg(foreign); });
}

TEST(Shapes, CuboidClosedForm) {
    // a = (f v e^2)^(1/3), b = a/e, c = b/f
    auto e1 = cuboid_edges(2, 1, 32000);
    EXPECT_NEAR(e1[0], 50.397, 1e-3);
    EXPECT_NEAR(e1[1], 25.198, 1e-3);
    EXPECT_NEAR(e1[2], 25.198, 1e-3);
    auto e2 = cuboid_edges(3, 3, 24000);
    EXPECT_NEAR(e2[0], 86.53, 0.01);
    EXPECT_NEAR(e2[1], 28.84, 0.01);
    EXPECT_NEAR(e2[2], 9.61, 0.01);
    EXPECT_NEAR(e2[0] * e2[1] * e2[2], 24000, 1e-6);
}

TEST(Shapes, CuboidRasterization) {
    const auto g = generate_cuboid({ShapeKind::cuboid, 2, 1, 32000, 0});
    const double n = double(g.foreground_count());
    EXPECT_NEAR(n, 31250, 0.02 * 31250); // 50 x 25 x 25
    EXPECT_LT(std::abs(n - 32000) / 32000, 0.03);
    const auto cube = generate_cuboid({ShapeKind::cuboid, 1, 1, 27000, 0});
    EXPECT_EQ(cube.foreground_count(), 27000u);
    EXPECT_EQ(cube.dims(), (Dims{34, 34, 34}));
}

TEST(Shapes, EllipsoidClosedForm) {
    const auto s = ellipsoid_half_axes(1, 1, 113097);
    EXPECT_NEAR(s[0], 30.0, 1e-3);
    const auto h = ellipsoid_half_axes(2, 1, 33510);
    EXPECT_NEAR(h[0], 31.75, 0.05);
    EXPECT_NEAR(h[1], h[0] / 2, 1e-12);
    EXPECT_NEAR(h[2], h[0] / 2, 1e-12);
    const auto g = generate_ellipsoid({ShapeKind::ellipsoid, 1, 1, 113097, 0});
    const double sphere_volume = 4.0 / 3.0 * std::numbers::pi * 27000.0;
    EXPECT_LT(std::abs(double(g.foreground_count()) - sphere_volume) / sphere_volume, 0.03);
}

TEST(Shapes, TooSmallOrInvalidSpecs) {
    expect_error(ErrorKind::invalid_spec, [] { generate_ellipsoid({ShapeKind::ellipsoid, 1, 1, 4.18879, 0}); });
    expect_error(ErrorKind::invalid_spec, [] { generate_cuboid({ShapeKind::cuboid, 0.5, 1, 30000, 0}); });
    expect_error(ErrorKind::invalid_spec, [] { generate_cuboid({ShapeKind::cuboid, 1, 1, -1, 0}); });
    expect_error(ErrorKind::invalid_spec, [] { generate_cuboid({ShapeKind::cuboid, 3, 3, 500, 0}); });
}

TEST(Shapes, VolumeFidelityOverRandomSpecs) {
    int checked = 0;
    for (auto kind : {ShapeKind::cuboid, ShapeKind::ellipsoid}) {
        const auto specs = sample_dataset(kind, 60, 5);
        for (const auto& s : specs) {
            const auto ext = kind == ShapeKind::cuboid ? cuboid_edges(s.e, s.f, s.v) : ellipsoid_half_axes(s.e, s.f, s.v);
            const double min_extent = kind == ShapeKind::cuboid ? ext[2] : 2 * ext[2];
            if (min_extent < 8) continue;
            const auto g = generate_shape(s);
            EXPECT_LT(std::abs(double(g.foreground_count()) - s.v) / s.v, 0.03) << s.e << ' ' << s.f << ' ' << s.v;
            ++checked;
        }
    }
    EXPECT_GE(checked, 100);
}

TEST(Shapes, SamplingRangesAndDeterminism) {
    const auto specs = sample_dataset(ShapeKind::cuboid, 500, 17);
    ASSERT_EQ(specs.size(), 500u);
    for (const auto& s : specs) {
        EXPECT_GE(s.e, 1.0);
        EXPECT_LE(s.e, 3.0);
        EXPECT_GE(s.f, 1.0);
        EXPECT_LE(s.f, 3.0);
        EXPECT_GE(s.v, 24000.0);
        EXPECT_LE(s.v, 120000.0);
    }
    const auto a = sample_dataset(ShapeKind::cuboid, 1, 99), b = sample_dataset(ShapeKind::cuboid, 1, 99);
    EXPECT_EQ(a[0].e, b[0].e);
    EXPECT_EQ(a[0].v, b[0].v);
    EXPECT_EQ(a[0].seed, b[0].seed);
    const auto many = sample_dataset(ShapeKind::ellipsoid, 10000, 3);
    double mean = 0;
    for (const auto& s : many) mean += s.e;
    mean /= double(many.size());
    EXPECT_GE(mean, 1.95);
    EXPECT_LE(mean, 2.05);
}

TEST(Shapes, MaxExtentRejection) {
    SamplingRanges r{1.5, 3, 1, 3, 8000, 32000, 40};
    for (const auto& s : sample_dataset(ShapeKind::cuboid, 200, 4, r)) EXPECT_LE(longest_extent(s), 40.0);
}

TEST(Descriptors, CuboidRecoversElongationAndFlatness) {
    const auto g = generate_cuboid({ShapeKind::cuboid, 2, 1.5, 48000, 0});
    const auto d = shape_descriptors(g);
    EXPECT_GE(d.elongation, 1.9);
    EXPECT_LE(d.elongation, 2.1);
    EXPECT_GE(d.flatness, 1.4);
    EXPECT_LE(d.flatness, 1.6);
    // uniform box: variance along an edge of n voxels is (n^2 - 1) / 12
    const auto b = box(40, 20, 10);
    const auto db = shape_descriptors(b);
    EXPECT_NEAR(db.eigenvalues[0], (40.0 * 40 - 1) / 12, 1e-9);
    EXPECT_NEAR(db.eigenvalues[2], (10.0 * 10 - 1) / 12, 1e-9);
    EXPECT_NEAR(std::abs(db.axes[0][0]), 1.0, 1e-12);
    EXPECT_EQ(db.volume, 8000.0);
}

TEST(Descriptors, DegenerateAndIsotropicCases) {
    const auto one = shape_descriptors(box(1, 1, 1));
    for (double l : one.axis_lengths) EXPECT_EQ(l, 0.0);
    EXPECT_EQ(one.elongation, 1.0);
    EXPECT_EQ(one.flatness, 1.0);
    const auto s = shape_descriptors(sphere(15));
    EXPECT_NEAR(s.elongation, 1.0, 0.02);
    EXPECT_NEAR(s.flatness, 1.0, 0.02);
    expect_error(ErrorKind::empty_mask, [] { shape_descriptors(LabelGrid(Dims{3, 3, 3})); });
}

TEST(Descriptors, RecoveryWithinFivePercent) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(1.2, 3.0), uv(24000, 120000);
    for (int i = 0; i < 12; ++i) {
        const ShapeSpec s{i % 2 ? ShapeKind::ellipsoid : ShapeKind::cuboid, u(rng), u(rng), uv(rng), 0};
        const auto ext = s.kind == ShapeKind::cuboid ? cuboid_edges(s.e, s.f, s.v) : ellipsoid_half_axes(s.e, s.f, s.v);
        if ((s.kind == ShapeKind::cuboid ? ext[2] : 2 * ext[2]) < 8) continue;
        const auto d = shape_descriptors(generate_shape(s));
        EXPECT_NEAR(d.elongation / s.e, 1.0, 0.05);
        EXPECT_NEAR(d.flatness / s.f, 1.0, 0.05);
    }
}

TEST(Descriptors, AxisSignConvention) {
    EXPECT_TRUE(canonical_axis(Vec3(-1, 0, 0)).isApprox(Vec3(1, 0, 0)));
    EXPECT_TRUE(canonical_axis(Vec3(0, -0.6, 0.8)).isApprox(Vec3(0, 0.6, -0.8)));
}

TEST(Transforms, PadAndCrop) {
    const auto g = box(30, 30, 30);
    const auto p = pad(g, Margins::uniform(5));
    EXPECT_EQ(p.dims(), (Dims{40, 40, 40}));
    EXPECT_EQ(p.foreground_count(), g.foreground_count());
    EXPECT_EQ(pad(g, Margins{}), g);
    const auto cell = generate_cuboid({ShapeKind::cuboid, 1.7, 1.3, 5000, 0}, 3);
    for (int m : {0, 1, 3}) EXPECT_EQ(crop_to_bbox(pad(crop_to_bbox(cell, m), Margins::uniform(4)), m), crop_to_bbox(cell, m));
    EXPECT_EQ(crop_to_bbox(cell, 3), cell);
    expect_error(ErrorKind::invalid_argument, [&] { pad(g, Margins{{-1, 0, 0}, {0, 0, 0}}); });
}

TEST(Transforms, LatticeRotationsAreBijections) {
    const auto cell = generate_cuboid({ShapeKind::cuboid, 1.8, 1.4, 3000, 0});
    const auto rots = lattice_rotations();
    ASSERT_EQ(rots.size(), 24u);
    for (const auto& r : rots) {
        const auto out = rotate_nearest(cell, r, 0);
        EXPECT_EQ(out.foreground_count(), cell.foreground_count());
        EXPECT_EQ(out.size(), cell.size());
    }
    // 90 degrees about z maps (x, y) to (-y, x)
    const auto rz = rotate_nearest(box(6, 3, 2), axis_rotation(2, std::numbers::pi / 2), 0);
    EXPECT_EQ(rz.dims(), (Dims{3, 6, 2}));
    EXPECT_EQ(rz.foreground_count(), 36u);
}

TEST(Transforms, IdentityAndSphereRotation) {
    const auto cell = generate_cuboid({ShapeKind::cuboid, 1.5, 1.2, 2000, 0});
    const auto id = rotate_nearest(cell, Mat3::Identity(), 2);
    EXPECT_EQ(id, pad(cell, Margins::uniform(2)));
    const auto s = sphere(20);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 3; ++i) {
        const auto r = rotate_nearest(s, random_rotation(rng));
        EXPECT_LT(std::abs(double(r.foreground_count()) - double(s.foreground_count())) / double(s.foreground_count()), 0.02);
    }
    Mat3 bad = Mat3::Identity();
    bad(0, 0) = 2;
    expect_error(ErrorKind::non_orthonormal, [&] { rotate_nearest(s, bad); });
    expect_error(ErrorKind::non_orthonormal, [&] { rotate_nearest(s, -Mat3::Identity()); });
}

TEST(Transforms, RandomRotationIsUniformOnAverage) {
    // E[R] = 0 for the Haar measure on SO(3)
    std::mt19937_64 rng(12);
    Mat3 sum = Mat3::Zero();
    const int n = 4000;
    for (int i = 0; i < n; ++i) sum += random_rotation(rng);
    EXPECT_LT((sum / n).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Transforms, IsotropicRescale) {
    const auto cube = box(20, 20, 20);
    const auto up = rescale_isotropic(cube, std::cbrt(27000.0 / 8000.0));
    EXPECT_NEAR(double(up.foreground_count()), 27000, 0.05 * 27000);
    EXPECT_EQ(rescale_isotropic(cube, 1.0), cube);
    const auto down = rescale_isotropic(box(40, 40, 40), 0.5);
    EXPECT_NEAR(double(down.foreground_count()) / 64000.0, 0.125, 0.01);
    expect_error(ErrorKind::invalid_argument, [&] { rescale_isotropic(cube, 0); });
    LabelGrid speck(Dims{8, 8, 8});
    speck(3, 3, 3) = 1;
    expect_error(ErrorKind::empty_mask, [&] { rescale_isotropic(speck, 0.1); });
}

TEST(Patterns, InterfaceCounts) {
    const auto b = box(40, 20, 20);
    const auto mid = plane_split(b, Vec3(1, 0, 0), Vec3(19.5, 9.5, 9.5));
    EXPECT_EQ(interface_area(mid).count, 400u);
    EXPECT_EQ(interface_area(mid).pairs.size(), 400u);
    const auto flat = plane_split(b, Vec3(0, 0, 1), Vec3(19.5, 9.5, 9.5));
    EXPECT_EQ(interface_area(flat).count, 800u);
    LabelGrid island = box(5, 5, 5);
    island(2, 2, 2) = 2;
    EXPECT_EQ(interface_area(island).count, 6u);
}

TEST(Patterns, MergeAndSwap) {
    const auto b = generate_ellipsoid({ShapeKind::ellipsoid, 1.5, 1.2, 6000, 0});
    const auto p = plane_split(b, Vec3(0.3, 1, -0.2), Vec3(10, 10, 10));
    EXPECT_EQ(merge_daughters(p), b);
    const auto s = swap_labels(p);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const int y = p.grid()[i];
        EXPECT_EQ(s.grid()[i], y == 0 ? 0 : 3 - y);
    }
    EXPECT_EQ(swap_labels(s), p);
    LabelGrid only1 = b;
    EXPECT_EQ(merge_daughters(only1), b);
    EXPECT_FALSE(DivisionPattern::is_valid(only1));
}

TEST(Patterns, VolumeRatio) {
    auto b = box(40, 10, 10);
    const auto half = plane_split(b, Vec3(1, 0, 0), Vec3(19.5, 5, 5));
    EXPECT_DOUBLE_EQ(volume_ratio(half), 0.5);
    const auto quarter = plane_split(b, Vec3(1, 0, 0), Vec3(9.5, 5, 5));
    EXPECT_DOUBLE_EQ(volume_ratio(quarter), 0.25);
    const auto ell = generate_ellipsoid({ShapeKind::ellipsoid, 2.2, 1.3, 20000, 0});
    EXPECT_NEAR(volume_ratio(errera_axis_rule(ell).pattern), 0.5, 0.02);
}

TEST(Patterns, ErosionShiftsThePlane) {
    const auto b = box(40, 20, 20);
    const auto p = plane_split(b, Vec3(1, 0, 0), Vec3(19.5, 9.5, 9.5));
    EXPECT_EQ(shift_plane_by_erosion(p, 0, 1), p);
    for (int k : {1, 3}) {
        const auto s = shift_plane_by_erosion(p, k, 1);
        EXPECT_EQ(s.grid().count(1), std::size_t(400 * (20 - k)));
        EXPECT_EQ(merge_daughters(s), b);
    }
    expect_error(ErrorKind::degenerate_pattern, [&] { shift_plane_by_erosion(p, 25, 1); });
}

TEST(Patterns, Components) {
    LabelGrid g(Dims{5, 1, 1});
    g[0] = 1;
    g[1] = 1;
    g[3] = 1;
    const auto [comp, sizes] = label_components(g, 1);
    ASSERT_EQ(sizes.size(), 2u);
    EXPECT_EQ(sizes[0], 2u);
    EXPECT_EQ(sizes[1], 1u);
    EXPECT_EQ(comp[2], -1);
}
