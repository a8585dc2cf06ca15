#pragma once

#include <cmath>

#include "celldiv/pipeline/dataset.hpp"
#include "celldiv/transforms.hpp"

namespace celldiv::pipeline {

inline constexpr std::size_t kMinStandardizedVoxels = 64;

/// Isotropic factor that brings a cell of volume v to volume vt.
inline double standardization_factor(double v, double vt) {
    if (!(v > 0) || !(vt > 0)) fail(ErrorKind::invalid_argument, "volumes must be > 0");
    return std::cbrt(vt / v);
}

inline double mean_volume(const std::vector<Sample>& samples) {
    if (samples.empty()) fail(ErrorKind::invalid_argument, "no samples to average");
    double sum = 0;
    for (const auto& s : samples) sum += double(s.mother.foreground_count());
    return sum / double(samples.size());
}

/// Rescales mother and target jointly so the cell volume is close to vt,
/// then re-crops to the bounding box plus `margin`.
inline Sample standardize_sample(const Sample& s, double vt, int margin = 2) {
    const double factor = standardization_factor(double(s.mother.foreground_count()), vt);
    Sample out = s;
    LabelGrid mother = rescale_isotropic(s.mother, factor);
    LabelGrid target = rescale_isotropic(s.target, factor);
    if (mother.foreground_count() < kMinStandardizedVoxels || !DivisionPattern::is_valid(target))
        fail(ErrorKind::degenerate_mask, "scaling collapses cell " + s.id);
    const auto box = bounding_box(mother);
    const Index3 lo{box->lo.x - margin, box->lo.y - margin, box->lo.z - margin};
    const Dims d{box->hi.x - box->lo.x + 1 + 2 * margin, box->hi.y - box->lo.y + 1 + 2 * margin,
                 box->hi.z - box->lo.z + 1 + 2 * margin};
    out.mother = extract(mother, lo, d);
    out.target = extract(target, lo, d);
    return out;
}

inline std::vector<Sample> standardize_volume(const std::vector<Sample>& samples, double vt) {
    std::vector<Sample> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(standardize_sample(s, vt));
    return out;
}

/// Manifest version: rescales every entry to vt (default: mean training volume)
/// and writes the new pairs under `out_root`.
inline DatasetManifest standardize_volume(const DatasetManifest& m, const fs::path& out_root, double vt = 0) {
    if (vt <= 0) vt = mean_volume(load_split(m, Split::train));
    DatasetManifest out = m;
    out.root = out_root;
    for (auto& e : out.entries) {
        const Sample s = standardize_sample(load_sample(m, e), vt);
        e.mother = "cells/" + e.id + "_mother.vxg";
        e.target = "cells/" + e.id + "_target.vxg";
        write_vxg(out_root / e.mother, s.mother, VxgKind::mask);
        write_vxg(out_root / e.target, s.target, VxgKind::division);
    }
    save_manifest(out, out_root / "manifest.json");
    return out;
}

} // namespace celldiv::pipeline
