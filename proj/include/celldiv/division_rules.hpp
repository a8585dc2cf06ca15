#pragma once

// Ground-truth division patterns: plane rules and Metropolis contact-area minimization.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "celldiv/descriptors.hpp"
#include "celldiv/patterns.hpp"

namespace celldiv {

enum class RuleKind { errera, anti_hertwig, metropolis };

inline const char* to_string(RuleKind r) {
    switch (r) {
    case RuleKind::errera: return "errera";
    case RuleKind::anti_hertwig: return "anti-hertwig";
    case RuleKind::metropolis: return "metropolis";
    }
    return "?";
}

inline RuleKind rule_kind_from_string(const std::string& s) {
    if (s == "errera") return RuleKind::errera;
    if (s == "anti-hertwig") return RuleKind::anti_hertwig;
    if (s == "metropolis") return RuleKind::metropolis;
    fail(ErrorKind::invalid_argument, "unknown division rule '" + s + "'");
}

/// Label 1 where (centre - point) . normal <= 0, label 2 elsewhere in the mask.
inline DivisionPattern plane_split(const LabelGrid& mask, const Vec3& normal, const Vec3& point) {
    if (!(normal.norm() > 0.0) || !normal.allFinite()) fail(ErrorKind::invalid_argument, "plane normal must be nonzero");
    const auto& d = mask.dims();
    const Vec3 upper(d.nx - 0.5, d.ny - 0.5, d.nz - 0.5);
    if (!point.allFinite() || (point.array() < -0.5).any() || (point.array() > upper.array()).any())
        fail(ErrorKind::invalid_argument, "plane point outside grid");
    LabelGrid out(d, mask.voxel_size());
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                if (mask(x, y, z) == 0) continue;
                const double s = (Vec3(x, y, z) - point).dot(normal);
                out(x, y, z) = s <= 0.0 ? 1 : 2;
            }
    if (out.count(1) == 0 || out.count(2) == 0) fail(ErrorKind::degenerate_pattern, "plane split left a daughter empty");
    return DivisionPattern(std::move(out));
}

struct RuleResult {
    DivisionPattern pattern;
    Vec3 normal;
    bool ambiguous = false;
};

/// Relative axis-length tolerance under which principal axes count as tied.
inline constexpr double kAxisTieTolerance = 0.01;

namespace detail {

// Axis `which` (0 = longest, 2 = shortest) of the descriptor; when other axes
// tie with it, the lexicographically smallest tied axis is used.
inline std::pair<Vec3, bool> principal_axis_choice(const ShapeDescriptor& d, int which) {
    const double ref = d.axis_lengths[std::size_t(which)];
    Vec3 best = d.axes[std::size_t(which)];
    bool ambiguous = false;
    for (int k = 0; k < 3; ++k) {
        if (k == which) continue;
        const double len = d.axis_lengths[std::size_t(k)];
        const bool tied = std::abs(len - ref) <= kAxisTieTolerance * std::max(ref, len);
        if (!tied) continue;
        ambiguous = true;
        if (lexicographically_less(d.axes[std::size_t(k)], best)) best = d.axes[std::size_t(k)];
    }
    return {best, ambiguous};
}

inline RuleResult axis_rule(const LabelGrid& mask, int which) {
    const auto d = shape_descriptors(mask);
    const auto [axis, ambiguous] = principal_axis_choice(d, which);
    return {plane_split(mask, axis, d.centroid), axis, ambiguous};
}

} // namespace detail

/// Symmetric division through the centroid, orthogonal to the longest axis.
inline RuleResult errera_axis_rule(const LabelGrid& mask) { return detail::axis_rule(mask, 0); }

/// Symmetric division through the centroid, orthogonal to the shortest axis.
inline RuleResult anti_hertwig_rule(const LabelGrid& mask) { return detail::axis_rule(mask, 2); }

struct MetropolisParams {
    double target_ratio = 0.5;
    double ratio_penalty_weight = 10.0;
    double initial_temperature = 1.5;
    double cooling = 0.998;
    int sweeps = 3000;
    std::uint64_t seed = 0;
};

struct MetropolisResult {
    DivisionPattern pattern;
    double energy = 0.0;
    double initial_energy = 0.0;
    std::size_t interface_faces = 0;
    double ratio = 0.0;
    /// Best energy seen after each sweep.
    std::vector<double> best_energy_trace;
};

inline double partition_energy(std::size_t interface_faces, std::size_t n1, std::size_t n2, const MetropolisParams& p) {
    const double n = double(n1 + n2);
    const double r = double(std::min(n1, n2)) / n;
    return double(interface_faces) + p.ratio_penalty_weight * (r - p.target_ratio) * (r - p.target_ratio) * n;
}

/// Reassigns every non-largest 6-connected component of a daughter to the
/// other daughter until both daughters are connected.
inline void enforce_connected_daughters(LabelGrid& grid) {
    for (int round = 0; round < 16; ++round) {
        bool changed = false;
        for (std::uint8_t label : {std::uint8_t(1), std::uint8_t(2)}) {
            auto [comp, sizes] = label_components(grid, label);
            if (sizes.size() <= 1) continue;
            const int keep = int(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            for (std::size_t i = 0; i < grid.size(); ++i)
                if (comp[i] >= 0 && comp[i] != keep) grid[i] = std::uint8_t(3 - label);
            changed = true;
        }
        if (!changed) return;
    }
}

/// Stochastic minimization of the daughter contact area under a soft volume-ratio constraint.
inline MetropolisResult metropolis_partition(const LabelGrid& mask, const MetropolisParams& p) {
    if (!(p.initial_temperature > 0.0)) fail(ErrorKind::invalid_argument, "initial temperature must be > 0");
    if (!(p.cooling > 0.0 && p.cooling < 1.0)) fail(ErrorKind::invalid_argument, "cooling factor must be in (0,1)");
    if (!(p.target_ratio > 0.0 && p.target_ratio <= 0.5)) fail(ErrorKind::invalid_argument, "target ratio must be in (0,0.5]");
    if (p.sweeps < 0) fail(ErrorKind::invalid_argument, "sweeps must be >= 0");

    std::vector<std::size_t> voxels;
    std::vector<int> compact(mask.size(), -1);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0) {
            compact[i] = int(voxels.size());
            voxels.push_back(i);
        }
    const std::size_t n = voxels.size();
    if (n < 100) fail(ErrorKind::invalid_argument, "Metropolis partition needs at least 100 mask voxels");

    std::vector<int> nbr(n * 6, -1);
    std::vector<int> degree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = mask.coords(voxels[i]);
        for (int k = 0; k < 6; ++k) {
            const auto& o = kFaceOffsets[std::size_t(k)];
            const int x = c.x + o[0], y = c.y + o[1], z = c.z + o[2];
            if (!mask.contains(x, y, z)) continue;
            const int j = compact[mask.index(x, y, z)];
            if (j >= 0) {
                nbr[i * 6 + std::size_t(k)] = j;
                ++degree[i];
            }
        }
    }

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::uint8_t> label(n);
    std::size_t count[3] = {0, 0, 0};
    for (auto& l : label) {
        l = unit(rng) < 0.5 ? 1 : 2;
        ++count[l];
    }

    std::vector<int> diff(n, 0);
    std::size_t faces = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (int k = 0; k < 6; ++k) {
            const int j = nbr[i * 6 + std::size_t(k)];
            if (j >= 0 && label[std::size_t(j)] != label[i]) {
                ++diff[i];
                if (std::size_t(j) > i) ++faces;
            }
        }

    // Interface-adjacent voxels (diff > 0), with O(1) insert/remove.
    std::vector<int> members;
    std::vector<int> where(n, -1);
    auto add = [&](std::size_t i) {
        if (where[i] >= 0) return;
        where[i] = int(members.size());
        members.push_back(int(i));
    };
    auto remove = [&](std::size_t i) {
        const int w = where[i];
        if (w < 0) return;
        const int last = members.back();
        members[std::size_t(w)] = last;
        where[std::size_t(last)] = w;
        members.pop_back();
        where[i] = -1;
    };
    for (std::size_t i = 0; i < n; ++i)
        if (diff[i] > 0) add(i);

    double energy = partition_energy(faces, count[1], count[2], p);
    const double initial_energy = energy;
    double best_energy = energy;
    std::vector<std::uint8_t> best = label;
    std::vector<double> trace;
    trace.reserve(std::size_t(p.sweeps));

    double temperature = p.initial_temperature;
    for (int sweep = 0; sweep < p.sweeps; ++sweep) {
        for (std::size_t step = 0; step < n && !members.empty(); ++step) {
            const std::size_t i = std::size_t(members[std::size_t(rng() % members.size())]);
            const std::uint8_t from = label[i], to = std::uint8_t(3 - from);
            const long long d_faces = degree[i] - 2 * diff[i];
            std::size_t c1 = count[1], c2 = count[2];
            (from == 1 ? c1 : c2) -= 1;
            (to == 1 ? c1 : c2) += 1;
            if (c1 == 0 || c2 == 0) continue;
            const double new_energy = partition_energy(std::size_t(static_cast<long long>(faces) + d_faces), c1, c2, p);
            const double delta = new_energy - energy;
            if (delta > 0.0 && unit(rng) >= std::exp(-delta / temperature)) continue;

            label[i] = to;
            count[1] = c1;
            count[2] = c2;
            faces = std::size_t(static_cast<long long>(faces) + d_faces);
            energy = new_energy;
            diff[i] = degree[i] - diff[i];
            if (diff[i] > 0) add(i); else remove(i);
            for (int k = 0; k < 6; ++k) {
                const int j = nbr[i * 6 + std::size_t(k)];
                if (j < 0) continue;
                const auto ju = std::size_t(j);
                diff[ju] += label[ju] == to ? -1 : 1;
                if (diff[ju] > 0) add(ju); else remove(ju);
            }
        }
        if (energy < best_energy) {
            best_energy = energy;
            best = label;
        }
        trace.push_back(best_energy);
        temperature *= p.cooling;
    }

    LabelGrid grid(mask.dims(), mask.voxel_size());
    for (std::size_t i = 0; i < n; ++i) grid[voxels[i]] = best[i];
    enforce_connected_daughters(grid);
    if (grid.count(1) == 0 || grid.count(2) == 0)
        fail(ErrorKind::degenerate_pattern, "Metropolis partition did not produce two daughters");

    const auto faces_final = interface_area(grid, false).count;
    MetropolisResult out{DivisionPattern(std::move(grid)), 0.0, initial_energy, faces_final, 0.0, std::move(trace)};
    out.ratio = volume_ratio(out.pattern);
    out.energy = partition_energy(faces_final, out.pattern.grid().count(1), out.pattern.grid().count(2), p);
    return out;
}

} // namespace celldiv
