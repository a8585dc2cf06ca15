#pragma once

#include <random>
#include <vector>

#include "celldiv/nn/tensor.hpp"
#include "celldiv/pipeline/dataset.hpp"
#include "celldiv/transforms.hpp"

namespace celldiv::pipeline {

struct Batch {
    nn::Tensor<float> input;       // (B, 2, canvas)
    nn::Tensor<float> mask;        // (B, 1, canvas)
    std::vector<LabelGrid> targets; // padded to the canvas
    std::vector<Index3> offsets;
};

/// Per-axis offset of a grid of size n centered on a canvas of size canvas,
/// rounded down (to a multiple of `align`).
inline int centered_offset(int n, int canvas, int align = 1) {
    const int off = (canvas - n) / 2;
    return off - off % align;
}

/// Zero-pads every sample to the per-batch maximum dims. With align > 1 the
/// offsets are rounded down to multiples of align so the pooling grid phase of
/// each sample is unchanged by the padding.
inline Batch collate_batch(const std::vector<const Sample*>& samples, int align = 1) {
    if (samples.empty()) fail(ErrorKind::invalid_argument, "empty batch");
    if (align < 1) fail(ErrorKind::invalid_argument, "alignment must be >= 1");
    Dims canvas{1, 1, 1};
    for (const auto* s : samples) {
        const auto& d = s->mother.dims();
        canvas = {std::max(canvas.nx, d.nx), std::max(canvas.ny, d.ny), std::max(canvas.nz, d.nz)};
    }
    const int b = int(samples.size());
    Batch out;
    out.input = nn::Tensor<float>(nn::Shape5{b, 2, canvas.nx, canvas.ny, canvas.nz});
    out.mask = nn::Tensor<float>(nn::Shape5{b, 1, canvas.nx, canvas.ny, canvas.nz});
    for (int i = 0; i < b; ++i) {
        const auto& s = *samples[std::size_t(i)];
        const auto& d = s.mother.dims();
        const Index3 off{centered_offset(d.nx, canvas.nx, align), centered_offset(d.ny, canvas.ny, align),
                         centered_offset(d.nz, canvas.nz, align)};
        const Margins m{{off.x, off.y, off.z}, {canvas.nx - d.nx - off.x, canvas.ny - d.ny - off.y, canvas.nz - d.nz - off.z}};
        LabelGrid mother = pad(s.mother, m);
        out.targets.push_back(pad(s.target, m));
        out.offsets.push_back(off);
        const std::size_t n = mother.size();
        const std::size_t in0 = out.input.plane(i, 0), in1 = out.input.plane(i, 1), mk = out.mask.plane(i, 0);
        for (std::size_t v = 0; v < n; ++v) {
            const bool on = mother[v] != 0;
            out.input[in0 + v] = on ? 0.0f : 1.0f;
            out.input[in1 + v] = on ? 1.0f : 0.0f;
            out.mask[mk + v] = on ? 1.0f : 0.0f;
        }
    }
    return out;
}

/// Pads the low side of each axis by a random amount in [0, align).
inline Sample shift_phase(const Sample& s, int align, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, align - 1);
    const int sx = u(rng), sy = u(rng), sz = u(rng);
    const Margins m{{sx, sy, sz}, {0, 0, 0}};
    Sample out = s;
    out.mother = pad(s.mother, m);
    out.target = pad(s.target, m);
    return out;
}

inline constexpr int kAugmentMargin = 4;

/// Joint random rotation of mother and target, re-cropped to the bounding box plus a margin.
inline Sample augment(const Sample& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Mat3 r = random_rotation(rng);
    Sample out = s;
    LabelGrid mother = rotate_nearest(s.mother, r, 1);
    LabelGrid target = rotate_nearest(s.target, r, 1);
    const auto box = bounding_box(mother);
    if (!box) fail(ErrorKind::empty_mask, "rotation removed the cell");
    const Index3 lo{box->lo.x - kAugmentMargin, box->lo.y - kAugmentMargin, box->lo.z - kAugmentMargin};
    const Dims d{box->hi.x - box->lo.x + 1 + 2 * kAugmentMargin, box->hi.y - box->lo.y + 1 + 2 * kAugmentMargin,
                 box->hi.z - box->lo.z + 1 + 2 * kAugmentMargin};
    out.mother = extract(mother, lo, d);
    out.target = extract(target, lo, d);
    return out;
}

} // namespace celldiv::pipeline
