#pragma once

// Voxel-face quad meshes as Wavefront OBJ (1-indexed vertices).

#include <map>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "celldiv/label_grid.hpp"

namespace celldiv {

struct QuadMesh {
    std::vector<std::array<int, 3>> vertices; // voxel-corner lattice coordinates
    std::vector<std::array<int, 4>> quads;    // 0-based vertex indices

    std::size_t face_count() const { return quads.size(); }
};

namespace detail {

class MeshBuilder {
public:
    explicit MeshBuilder(QuadMesh& m) : mesh_(m) {}

    // Unit face orthogonal to `axis` at lattice position c (corner with the smallest coordinates).
    void add_face(std::array<int, 3> c, int axis, bool flip) {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        std::array<std::array<int, 3>, 4> p{c, c, c, c};
        p[1][u] += 1;
        p[2][u] += 1;
        p[2][v] += 1;
        p[3][v] += 1;
        std::array<int, 4> q{};
        for (int i = 0; i < 4; ++i) q[std::size_t(i)] = vertex(p[std::size_t(i)]);
        if (flip) std::swap(q[1], q[3]);
        mesh_.quads.push_back(q);
    }

private:
    int vertex(const std::array<int, 3>& p) {
        auto [it, inserted] = index_.try_emplace(p, int(mesh_.vertices.size()));
        if (inserted) mesh_.vertices.push_back(p);
        return it->second;
    }
    QuadMesh& mesh_;
    std::map<std::array<int, 3>, int> index_;
};

template <class Pred>
QuadMesh faces_where(const LabelGrid& g, Pred between) {
    QuadMesh m;
    MeshBuilder b(m);
    const auto& d = g.dims();
    auto at = [&](int x, int y, int z) -> int { return g.contains(x, y, z) ? g(x, y, z) : 0; };
    // every lattice face is visited once, from its low side (including the face below index 0)
    for (int z = -1; z < d.nz; ++z)
        for (int y = -1; y < d.ny; ++y)
            for (int x = -1; x < d.nx; ++x) {
                const int a = at(x, y, z);
                const std::array<int, 3> n{at(x + 1, y, z), at(x, y + 1, z), at(x, y, z + 1)};
                for (int axis = 0; axis < 3; ++axis) {
                    const int c = n[std::size_t(axis)];
                    if (!between(a, c)) continue;
                    std::array<int, 3> corner{x, y, z};
                    corner[std::size_t(axis)] += 1;
                    b.add_face(corner, axis, a == 0 || a > c);
                }
            }
    return m;
}

} // namespace detail

/// Boundary between the cell (any nonzero label) and the background.
inline QuadMesh surface_mesh(const LabelGrid& g) {
    return detail::faces_where(g, [](int a, int b) { return (a == 0) != (b == 0); });
}

/// Faces shared by daughters 1 and 2.
inline QuadMesh interface_mesh(const LabelGrid& g) {
    return detail::faces_where(g, [](int a, int b) { return (a == 1 && b == 2) || (a == 2 && b == 1); });
}

inline void write_obj(std::ostream& os, const std::vector<std::pair<std::string, QuadMesh>>& objects, double scale = 1.0) {
    os << "# voxel face mesh\n";
    std::size_t base = 1;
    for (const auto& [name, mesh] : objects) {
        os << "o " << name << '\n';
        for (const auto& v : mesh.vertices) os << "v " << v[0] * scale << ' ' << v[1] * scale << ' ' << v[2] * scale << '\n';
        for (const auto& q : mesh.quads)
            os << "f " << q[0] + base << ' ' << q[1] + base << ' ' << q[2] + base << ' ' << q[3] + base << '\n';
        base += mesh.vertices.size();
    }
}

} // namespace celldiv
