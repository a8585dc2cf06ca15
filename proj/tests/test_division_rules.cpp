#include <gtest/gtest.h>

#include <numbers>

#include "celldiv/division_rules.hpp"
#include "celldiv/shapes.hpp"
#include "celldiv/transforms.hpp"

using namespace celldiv;

namespace {

LabelGrid box(int nx, int ny, int nz, int margin = 1) {
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

Vec3 grid_centre(const LabelGrid& g) {
    return Vec3(0.5 * (g.dims().nx - 1), 0.5 * (g.dims().ny - 1), 0.5 * (g.dims().nz - 1));
}

// Brute-force face count, independent of interface_area.
std::size_t count_faces(const LabelGrid& g) {
    std::size_t n = 0;
    const auto& d = g.dims();
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const int a = g(x, y, z);
                if (a == 0) continue;
                if (x + 1 < d.nx && g(x + 1, y, z) != 0 && g(x + 1, y, z) != a) ++n;
                if (y + 1 < d.ny && g(x, y + 1, z) != 0 && g(x, y + 1, z) != a) ++n;
                if (z + 1 < d.nz && g(x, y, z + 1) != 0 && g(x, y, z + 1) != a) ++n;
            }
    return n;
}

} // namespace

TEST(PlaneSplit, AxisAlignedBoxes) {
    const auto b = box(40, 20, 20);
    const auto p = plane_split(b, Vec3(1, 0, 0), grid_centre(b));
    EXPECT_EQ(p.grid().count(1), 8000u);
    EXPECT_EQ(p.grid().count(2), 8000u);
    EXPECT_EQ(count_faces(p.grid()), 400u);
    EXPECT_EQ(merge_daughters(p), b);
    // label 1 lies on the negative side of the normal
    EXPECT_EQ(p.grid()(1, 10, 10), 1);
    EXPECT_EQ(p.grid()(40, 10, 10), 2);
}

TEST(PlaneSplit, SphereThroughCentre) {
    const auto s = sphere(20);
    const auto p = plane_split(s, Vec3(0.3, -0.5, 0.8), grid_centre(s));
    EXPECT_NEAR(volume_ratio(p), 0.5, 0.01);
    const double disk = std::numbers::pi * 400;
    // oblique cuts through a voxel lattice count more faces than the disk area
    const double faces = double(count_faces(p.grid()));
    const auto q = plane_split(s, Vec3(0, 0, 1), grid_centre(s) + Vec3(0, 0, 0.5));
    EXPECT_LT(std::abs(double(count_faces(q.grid())) - disk) / disk, 0.05);
    EXPECT_GT(faces, disk);
}

TEST(PlaneSplit, Errors) {
    const auto b = box(4, 4, 4);
    EXPECT_THROW(plane_split(b, Vec3::Zero(), grid_centre(b)), Error);
    EXPECT_THROW(plane_split(b, Vec3(1, 0, 0), Vec3(0.2, 3, 3)), Error); // everything on one side
}

TEST(PlaneSplit, EquivariantUnderLatticeRotations) {
    const auto cell = generate_ellipsoid({ShapeKind::ellipsoid, 1.7, 1.3, 4000, 0}, 1);
    const Vec3 normal(0.37, -0.81, 0.45), point = grid_centre(cell) + Vec3(0.8, -1.3, 0.4);
    const auto split = plane_split(cell, normal, point);
    for (const auto& r : lattice_rotations()) {
        const auto rotated = rotate_nearest(cell, r, 0);
        // rotate_nearest maps centre to centre
        const Vec3 p2 = r * (point - grid_centre(cell)) + grid_centre(rotated);
        EXPECT_EQ(plane_split(rotated, r * normal, p2).grid(), rotate_nearest(split.grid(), r, 0));
    }
}

TEST(Errera, CuboidInterfaceIsShortCrossSection) {
    const auto g = generate_cuboid({ShapeKind::cuboid, 2, 1, 32000, 0});
    const auto r = errera_axis_rule(g);
    const double faces = double(interface_area(r.pattern).count);
    EXPECT_NEAR(faces, 635, 0.05 * 635);
    EXPECT_EQ(faces, double(count_faces(r.pattern.grid())));
    EXPECT_NEAR(std::abs(r.normal[0]), 1.0, 1e-9);
    EXPECT_FALSE(r.ambiguous);
    EXPECT_NEAR(volume_ratio(r.pattern), 0.5, 0.02);
}

TEST(Errera, CubeIsAmbiguousButStillSplits) {
    const auto r = errera_axis_rule(generate_cuboid({ShapeKind::cuboid, 1, 1, 27000, 0}));
    EXPECT_TRUE(r.ambiguous);
    EXPECT_EQ(interface_area(r.pattern).count, 900u);
}

TEST(Errera, EllipsoidHalves) {
    const auto r = errera_axis_rule(generate_ellipsoid({ShapeKind::ellipsoid, 3, 1, 30000, 0}));
    EXPECT_NEAR(volume_ratio(r.pattern), 0.5, 0.02);
    EXPECT_FALSE(r.ambiguous);
}

TEST(Errera, EmptyMask) {
    try {
        errera_axis_rule(LabelGrid(Dims{4, 4, 4}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_mask);
    }
}

TEST(AntiHertwig, CutsAlongTheLargestFace) {
    const auto b = box(40, 20, 20);
    const auto r = anti_hertwig_rule(b);
    EXPECT_TRUE(r.ambiguous);
    EXPECT_EQ(interface_area(r.pattern).count, 800u);
    // e = f = 2: a*b face versus b*c face is a factor e*f / f = 4
    const auto c = generate_cuboid({ShapeKind::cuboid, 2, 2, 64000, 0});
    const auto edges = cuboid_edges(2, 2, 64000);
    const double ah = double(interface_area(anti_hertwig_rule(c).pattern).count);
    const double er = double(interface_area(errera_axis_rule(c).pattern).count);
    EXPECT_NEAR(ah / er, edges[0] / edges[2], 0.05 * edges[0] / edges[2]);
    EXPECT_NEAR(ah / er, 4.0, 0.2);
    EXPECT_TRUE(anti_hertwig_rule(sphere(10)).ambiguous);
}

TEST(Metropolis, EnergyFormula) {
    MetropolisParams p;
    EXPECT_DOUBLE_EQ(partition_energy(400, 8000, 8000, p), 400.0);
    // ratio 0.25 on 100 voxels: 10 * 0.0625 * 100
    EXPECT_DOUBLE_EQ(partition_energy(7, 25, 75, p), 7.0 + 62.5);
}

TEST(Metropolis, BoxFindsTheMinimalCut) {
    const auto b = box(40, 20, 20);
    MetropolisParams p;
    p.seed = 11;
    const auto r = metropolis_partition(b, p);
    EXPECT_LE(r.interface_faces, 420u);
    EXPECT_EQ(r.interface_faces, count_faces(r.pattern.grid()));
    EXPECT_GE(r.ratio, 0.48);
    EXPECT_LE(r.ratio, 0.52);
    EXPECT_EQ(merge_daughters(r.pattern), b);
    EXPECT_LT(r.energy, r.initial_energy);
    for (std::size_t i = 1; i < r.best_energy_trace.size(); ++i) EXPECT_LE(r.best_energy_trace[i], r.best_energy_trace[i - 1]);
    EXPECT_DOUBLE_EQ(r.best_energy_trace.back(), r.energy);
    for (std::uint8_t l : {1, 2}) EXPECT_EQ(label_components(r.pattern.grid(), l).second.size(), 1u);
}

TEST(Metropolis, SameSeedSameOutput) {
    const auto cell = generate_ellipsoid({ShapeKind::ellipsoid, 1.6, 1.2, 3000, 0});
    MetropolisParams p;
    p.sweeps = 300;
    p.seed = 5;
    const auto a = metropolis_partition(cell, p), b = metropolis_partition(cell, p);
    EXPECT_EQ(a.pattern, b.pattern);
    EXPECT_EQ(a.energy, b.energy);
    p.seed = 6;
    EXPECT_FALSE(metropolis_partition(cell, p).pattern == a.pattern);
}

TEST(Metropolis, EnergyNeverAboveStartAcrossSeeds) {
    const auto cell = generate_cuboid({ShapeKind::cuboid, 1.5, 1.2, 2000, 0});
    MetropolisParams p;
    p.sweeps = 50;
    for (std::uint64_t s = 0; s < 5; ++s) {
        p.seed = s;
        const auto r = metropolis_partition(cell, p);
        EXPECT_LT(r.energy, r.initial_energy);
        EXPECT_EQ(r.energy, partition_energy(r.interface_faces, r.pattern.grid().count(1), r.pattern.grid().count(2), p));
    }
}

TEST(Metropolis, TooSmallMaskFails) {
    EXPECT_THROW(metropolis_partition(box(4, 4, 4), MetropolisParams{}), Error);
}

TEST(Metropolis, ElongatedCuboidsCutAcrossTheLongAxis) {
    const auto cell = generate_cuboid({ShapeKind::cuboid, 1.8, 1, 9000, 0});
    const auto edges = cuboid_edges(1.8, 1, 9000);
    const double minimal = std::round(edges[1]) * std::round(edges[2]);
    MetropolisParams p;
    for (std::uint64_t s = 0; s < 5; ++s) {
        p.seed = 100 + s;
        const auto r = metropolis_partition(cell, p);
        EXPECT_LE(double(r.interface_faces), 1.1 * minimal) << "seed " << p.seed;
    }
}
