#pragma once

// Reference dense implementations of the masked layers, forward and backward.
// They follow the layer definitions literally (full zero-padded convolution,
// then multiplication by the mask) and are used to cross-check the
// active-voxel engine that the network actually runs on.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "celldiv/nn/tensor.hpp"

namespace celldiv::nn {

template <typename T>
struct ConvWeights {
    int cout = 0;
    int cin = 0;
    int kernel = 3;
    std::vector<T> weight; // (cout, cin, kz, ky, kx)
    std::vector<T> bias;   // (cout)

    ConvWeights() = default;
    ConvWeights(int cout_, int cin_, int kernel_)
        : cout(cout_), cin(cin_), kernel(kernel_),
          weight(std::size_t(cout_) * std::size_t(cin_) * std::size_t(kernel_ * kernel_ * kernel_), T(0)),
          bias(std::size_t(cout_), T(0)) {}

    std::size_t taps() const { return std::size_t(kernel * kernel * kernel); }
    T& w(int co, int ci, int kx, int ky, int kz) {
        return weight[((std::size_t(co) * cin + ci) * kernel + kz) * std::size_t(kernel * kernel) + std::size_t(ky * kernel + kx)];
    }
    T w(int co, int ci, int kx, int ky, int kz) const {
        return weight[((std::size_t(co) * cin + ci) * kernel + kz) * std::size_t(kernel * kernel) + std::size_t(ky * kernel + kx)];
    }
};

namespace detail {

template <typename T>
void check_mask(const Tensor<T>& input, const Tensor<T>& mask) {
    const auto& s = input.shape();
    const auto& m = mask.shape();
    if (m.channels != 1 || !s.same_spatial(m) || (m.batch != s.batch && m.batch != 1))
        fail(ErrorKind::shape_mismatch, "mask must be (B or 1, 1) with the input's spatial dims");
}

template <typename T>
T mask_at(const Tensor<T>& mask, int b, std::size_t voxel) {
    const int mb = mask.shape().batch == 1 ? 0 : b;
    return mask[mask.plane(mb, 0) + voxel];
}

} // namespace detail

/// Zero-padded convolution (odd kernel, stride 1) followed by masking.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& mask) {
    detail::check_mask(input, mask);
    const auto& s = input.shape();
    if (s.channels != w.cin) fail(ErrorKind::shape_mismatch, "conv3d input channels do not match weights");
    const int r = w.kernel / 2;
    Tensor<T> out(Shape5{s.batch, w.cout, s.nx, s.ny, s.nz});
    for (int b = 0; b < s.batch; ++b)
        for (int co = 0; co < w.cout; ++co)
            for (int z = 0; z < s.nz; ++z)
                for (int y = 0; y < s.ny; ++y)
                    for (int x = 0; x < s.nx; ++x) {
                        T acc = w.bias[std::size_t(co)];
                        for (int ci = 0; ci < w.cin; ++ci)
                            for (int kz = 0; kz < w.kernel; ++kz)
                                for (int ky = 0; ky < w.kernel; ++ky)
                                    for (int kx = 0; kx < w.kernel; ++kx) {
                                        const int ix = x + kx - r, iy = y + ky - r, iz = z + kz - r;
                                        if (ix < 0 || iy < 0 || iz < 0 || ix >= s.nx || iy >= s.ny || iz >= s.nz) continue;
                                        acc += w.w(co, ci, kx, ky, kz) * input(b, ci, ix, iy, iz);
                                    }
                        const std::size_t v = (std::size_t(z) * s.ny + y) * s.nx + x;
                        out(b, co, x, y, z) = acc * detail::mask_at(mask, b, v);
                    }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    ConvWeights<T> weights;
};

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& input, const ConvWeights<T>& w, const Tensor<T>& mask,
                             const Tensor<T>& grad_out) {
    const auto& s = input.shape();
    const int r = w.kernel / 2;
    ConvGrads<T> g{Tensor<T>(s), ConvWeights<T>(w.cout, w.cin, w.kernel)};
    for (int b = 0; b < s.batch; ++b)
        for (int co = 0; co < w.cout; ++co)
            for (int z = 0; z < s.nz; ++z)
                for (int y = 0; y < s.ny; ++y)
                    for (int x = 0; x < s.nx; ++x) {
                        const std::size_t v = (std::size_t(z) * s.ny + y) * s.nx + x;
                        const T go = grad_out(b, co, x, y, z) * detail::mask_at(mask, b, v);
                        if (go == T(0)) continue;
                        g.weights.bias[std::size_t(co)] += go;
                        for (int ci = 0; ci < w.cin; ++ci)
                            for (int kz = 0; kz < w.kernel; ++kz)
                                for (int ky = 0; ky < w.kernel; ++ky)
                                    for (int kx = 0; kx < w.kernel; ++kx) {
                                        const int ix = x + kx - r, iy = y + ky - r, iz = z + kz - r;
                                        if (ix < 0 || iy < 0 || iz < 0 || ix >= s.nx || iy >= s.ny || iz >= s.nz) continue;
                                        g.weights.w(co, ci, kx, ky, kz) += go * input(b, ci, ix, iy, iz);
                                        g.input(b, ci, ix, iy, iz) += go * w.w(co, ci, kx, ky, kz);
                                    }
                    }
    return g;
}

inline constexpr double kGroupNormEps = 1e-5;

template <typename T>
struct GroupNormCache {
    std::vector<T> mean;   // (batch, groups)
    std::vector<T> rstd;   // (batch, groups)
};

/// Group normalization whose statistics run over in-mask voxels only.
template <typename T>
Tensor<T> masked_group_norm(const Tensor<T>& input, const Tensor<T>& mask, int groups, const std::vector<T>& gamma,
                            const std::vector<T>& beta, GroupNormCache<T>* cache = nullptr) {
    detail::check_mask(input, mask);
    const auto& s = input.shape();
    if (groups < 1 || s.channels % groups != 0) fail(ErrorKind::shape_mismatch, "groups must divide channels");
    const int cpg = s.channels / groups;
    const std::size_t nsp = s.spatial();
    Tensor<T> out(s);
    GroupNormCache<T> local;
    local.mean.assign(std::size_t(s.batch * groups), T(0));
    local.rstd.assign(std::size_t(s.batch * groups), T(0));
    for (int b = 0; b < s.batch; ++b) {
        std::size_t inside = 0;
        for (std::size_t v = 0; v < nsp; ++v) inside += detail::mask_at(mask, b, v) != T(0);
        if (inside == 0) fail(ErrorKind::degenerate_mask, "group norm over an empty mask");
        for (int g = 0; g < groups; ++g) {
            double sum = 0.0, sq = 0.0;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (std::size_t v = 0; v < nsp; ++v)
                    if (detail::mask_at(mask, b, v) != T(0)) sum += double(input[input.plane(b, c) + v]);
            const double n = double(inside) * cpg;
            const double mean = sum / n;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (std::size_t v = 0; v < nsp; ++v)
                    if (detail::mask_at(mask, b, v) != T(0)) {
                        const double d = double(input[input.plane(b, c) + v]) - mean;
                        sq += d * d;
                    }
            const double rstd = 1.0 / std::sqrt(sq / n + kGroupNormEps);
            local.mean[std::size_t(b * groups + g)] = T(mean);
            local.rstd[std::size_t(b * groups + g)] = T(rstd);
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (std::size_t v = 0; v < nsp; ++v) {
                    const T m = detail::mask_at(mask, b, v);
                    const T xhat = T((double(input[input.plane(b, c) + v]) - mean) * rstd);
                    out[out.plane(b, c) + v] = m * (gamma[std::size_t(c)] * xhat + beta[std::size_t(c)]);
                }
        }
    }
    if (cache) *cache = std::move(local);
    return out;
}

template <typename T>
struct GroupNormGrads {
    Tensor<T> input;
    std::vector<T> gamma;
    std::vector<T> beta;
};

template <typename T>
GroupNormGrads<T> masked_group_norm_backward(const Tensor<T>& input, const Tensor<T>& mask, int groups,
                                             const std::vector<T>& gamma, const GroupNormCache<T>& cache,
                                             const Tensor<T>& grad_out) {
    const auto& s = input.shape();
    const int cpg = s.channels / groups;
    const std::size_t nsp = s.spatial();
    GroupNormGrads<T> g{Tensor<T>(s), std::vector<T>(std::size_t(s.channels), T(0)),
                        std::vector<T>(std::size_t(s.channels), T(0))};
    for (int b = 0; b < s.batch; ++b) {
        std::size_t inside = 0;
        for (std::size_t v = 0; v < nsp; ++v) inside += detail::mask_at(mask, b, v) != T(0);
        for (int gr = 0; gr < groups; ++gr) {
            const double mean = cache.mean[std::size_t(b * groups + gr)];
            const double rstd = cache.rstd[std::size_t(b * groups + gr)];
            const double n = double(inside) * cpg;
            double m1 = 0.0, m2 = 0.0;
            for (int c = gr * cpg; c < (gr + 1) * cpg; ++c)
                for (std::size_t v = 0; v < nsp; ++v) {
                    if (detail::mask_at(mask, b, v) == T(0)) continue;
                    const double xhat = (double(input[input.plane(b, c) + v]) - mean) * rstd;
                    const double dy = grad_out[grad_out.plane(b, c) + v];
                    g.gamma[std::size_t(c)] += T(dy * xhat);
                    g.beta[std::size_t(c)] += T(dy);
                    const double dxhat = dy * double(gamma[std::size_t(c)]);
                    m1 += dxhat;
                    m2 += dxhat * xhat;
                }
            m1 /= n;
            m2 /= n;
            for (int c = gr * cpg; c < (gr + 1) * cpg; ++c)
                for (std::size_t v = 0; v < nsp; ++v) {
                    if (detail::mask_at(mask, b, v) == T(0)) continue;
                    const double xhat = (double(input[input.plane(b, c) + v]) - mean) * rstd;
                    const double dxhat = double(grad_out[grad_out.plane(b, c) + v]) * double(gamma[std::size_t(c)]);
                    g.input[g.input.plane(b, c) + v] = T(rstd * (dxhat - m1 - xhat * m2));
                }
        }
    }
    return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    Tensor<T> g(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

inline Dims pooled_dims(Dims d) { return {(d.nx + 1) / 2, (d.ny + 1) / 2, (d.nz + 1) / 2}; }

template <typename T>
struct PoolResult {
    Tensor<T> output;
    Tensor<T> mask;
    std::vector<std::ptrdiff_t> argmax; // flat input offset per output element, -1 if masked
};

/// 2x max pooling of activations and mask (ceil mode); pooled activations re-masked.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input, const Tensor<T>& mask) {
    detail::check_mask(input, mask);
    const auto& s = input.shape();
    const Dims pd = pooled_dims(s.dims());
    const int mb = mask.shape().batch;
    PoolResult<T> r{Tensor<T>(Shape5{s.batch, s.channels, pd.nx, pd.ny, pd.nz}),
                    Tensor<T>(Shape5{mb, 1, pd.nx, pd.ny, pd.nz}), {}};
    for (int b = 0; b < mb; ++b)
        for (int z = 0; z < pd.nz; ++z)
            for (int y = 0; y < pd.ny; ++y)
                for (int x = 0; x < pd.nx; ++x) {
                    T m = T(0);
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int ix = 2 * x + dx, iy = 2 * y + dy, iz = 2 * z + dz;
                                if (ix < s.nx && iy < s.ny && iz < s.nz) m = std::max(m, mask(b, 0, ix, iy, iz));
                            }
                    r.mask(b, 0, x, y, z) = m;
                }
    r.argmax.assign(r.output.numel(), -1);
    for (int b = 0; b < s.batch; ++b)
        for (int c = 0; c < s.channels; ++c)
            for (int z = 0; z < pd.nz; ++z)
                for (int y = 0; y < pd.ny; ++y)
                    for (int x = 0; x < pd.nx; ++x) {
                        T best = -std::numeric_limits<T>::infinity();
                        std::ptrdiff_t arg = -1;
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const int ix = 2 * x + dx, iy = 2 * y + dy, iz = 2 * z + dz;
                                    if (ix >= s.nx || iy >= s.ny || iz >= s.nz) continue;
                                    const auto off = input.offset(b, c, ix, iy, iz);
                                    if (input[off] > best) {
                                        best = input[off];
                                        arg = std::ptrdiff_t(off);
                                    }
                                }
                        const T m = r.mask(mb == 1 ? 0 : b, 0, x, y, z);
                        const auto o = r.output.offset(b, c, x, y, z);
                        r.output[o] = best * m;
                        r.argmax[o] = m != T(0) ? arg : -1;
                    }
    return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& input, const PoolResult<T>& fwd, const Tensor<T>& grad_out) {
    Tensor<T> g(input.shape());
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
        if (fwd.argmax[i] >= 0) g[std::size_t(fwd.argmax[i])] += grad_out[i];
    return g;
}

/// Checks that a decoder grid upsampled x2 (high side cropped) lands on the skip grid.
inline void check_upsample_dims(Dims decoder, Dims skip) {
    if (pooled_dims(skip) != decoder)
        fail(ErrorKind::shape_mismatch, "decoder dims are not the pooled skip dims");
}

/// Nearest x2 upsampling of the decoder, masked by the encoder-level mask,
/// concatenated with the skip activations along channels.
template <typename T>
Tensor<T> upsample_concat(const Tensor<T>& decoder, const Tensor<T>& skip, const Tensor<T>& skip_mask) {
    detail::check_mask(skip, skip_mask);
    const auto& ds = decoder.shape();
    const auto& ss = skip.shape();
    if (ds.batch != ss.batch) fail(ErrorKind::shape_mismatch, "decoder and skip batch differ");
    check_upsample_dims(ds.dims(), ss.dims());
    Tensor<T> out(Shape5{ss.batch, ds.channels + ss.channels, ss.nx, ss.ny, ss.nz});
    for (int b = 0; b < ss.batch; ++b)
        for (int z = 0; z < ss.nz; ++z)
            for (int y = 0; y < ss.ny; ++y)
                for (int x = 0; x < ss.nx; ++x) {
                    const std::size_t v = (std::size_t(z) * ss.ny + y) * ss.nx + x;
                    const T m = detail::mask_at(skip_mask, b, v);
                    for (int c = 0; c < ds.channels; ++c) out(b, c, x, y, z) = m * decoder(b, c, x / 2, y / 2, z / 2);
                    for (int c = 0; c < ss.channels; ++c) out(b, ds.channels + c, x, y, z) = m * skip(b, c, x, y, z);
                }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> upsample_concat_backward(const Tensor<T>& decoder, const Tensor<T>& skip,
                                                         const Tensor<T>& skip_mask, const Tensor<T>& grad_out) {
    const auto& ds = decoder.shape();
    const auto& ss = skip.shape();
    Tensor<T> gd(ds), gs(ss);
    for (int b = 0; b < ss.batch; ++b)
        for (int z = 0; z < ss.nz; ++z)
            for (int y = 0; y < ss.ny; ++y)
                for (int x = 0; x < ss.nx; ++x) {
                    const std::size_t v = (std::size_t(z) * ss.ny + y) * ss.nx + x;
                    const T m = detail::mask_at(skip_mask, b, v);
                    for (int c = 0; c < ds.channels; ++c) gd(b, c, x / 2, y / 2, z / 2) += m * grad_out(b, c, x, y, z);
                    for (int c = 0; c < ss.channels; ++c) gs(b, c, x, y, z) = m * grad_out(b, ds.channels + c, x, y, z);
                }
    return {std::move(gd), std::move(gs)};
}

} // namespace celldiv::nn
