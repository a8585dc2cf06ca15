#pragma once

// Layer kernels over active-voxel rows (rows = in-mask voxels, cols = channels).

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "celldiv/nn/active_set.hpp"

namespace celldiv::nn {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr std::size_t kConvChunkRows = 1024;

/// Dense (cout, cin, kz, ky, kx) weights as a (taps*cin, cout) GEMM operand.
template <typename T>
ColMat<T> weights_as_matrix(const std::vector<T>& w, int cout, int cin, int taps) {
    ColMat<T> m(taps * cin, cout);
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int k = 0; k < taps; ++k)
                m(k * cin + ci, co) = w[(std::size_t(co) * cin + ci) * std::size_t(taps) + std::size_t(k)];
    return m;
}

template <typename T>
void accumulate_matrix_into_weights(const ColMat<T>& m, std::vector<T>& w, int cout, int cin, int taps) {
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci)
            for (int k = 0; k < taps; ++k)
                w[(std::size_t(co) * cin + ci) * std::size_t(taps) + std::size_t(k)] += m(k * cin + ci, co);
}

namespace detail {

template <typename T>
void gather_rows(const ActiveLevel& lv, const RowMat<T>& x, std::size_t r0, std::size_t n, RowMat<T>& col) {
    const int cin = int(x.cols());
    col.resize(Eigen::Index(n), 27 * cin);
    for (std::size_t r = 0; r < n; ++r) {
        const std::int32_t* nb = &lv.nbr[(r0 + r) * 27];
        T* dst = col.row(Eigen::Index(r)).data();
        for (int k = 0; k < 27; ++k, dst += cin) {
            if (nb[k] >= 0)
                std::copy_n(x.row(nb[k]).data(), cin, dst);
            else
                std::fill_n(dst, cin, T(0));
        }
    }
}

} // namespace detail

/// 3x3x3 masked convolution; rows of `x` are the active voxels of `lv`.
template <typename T>
RowMat<T> sparse_conv3(const ActiveLevel& lv, const RowMat<T>& x, const ColMat<T>& w, const std::vector<T>& bias) {
    const std::size_t rows = lv.rows();
    RowMat<T> y(Eigen::Index(rows), w.cols());
    RowMat<T> col;
    for (std::size_t r0 = 0; r0 < rows; r0 += kConvChunkRows) {
        const std::size_t n = std::min(kConvChunkRows, rows - r0);
        detail::gather_rows(lv, x, r0, n, col);
        y.middleRows(Eigen::Index(r0), Eigen::Index(n)).noalias() = col * w;
    }
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), Eigen::Index(bias.size()));
    y.rowwise() += b;
    return y;
}

/// Backward of sparse_conv3: accumulates weight/bias gradients, returns dL/dx (or nothing if dx == nullptr).
template <typename T>
void sparse_conv3_backward(const ActiveLevel& lv, const RowMat<T>& x, const ColMat<T>& w, const RowMat<T>& dy,
                           ColMat<T>& dw, std::vector<T>& dbias, RowMat<T>* dx) {
    const std::size_t rows = lv.rows();
    const int cin = int(x.cols());
    RowMat<T> col, dcol;
    for (std::size_t r0 = 0; r0 < rows; r0 += kConvChunkRows) {
        const std::size_t n = std::min(kConvChunkRows, rows - r0);
        detail::gather_rows(lv, x, r0, n, col);
        const auto dyc = dy.middleRows(Eigen::Index(r0), Eigen::Index(n));
        dw.noalias() += col.transpose() * dyc;
        if (!dx) continue;
        dcol.noalias() = dyc * w.transpose();
        for (std::size_t r = 0; r < n; ++r) {
            const std::int32_t* nb = &lv.nbr[(r0 + r) * 27];
            const T* src = dcol.row(Eigen::Index(r)).data();
            for (int k = 0; k < 27; ++k, src += cin) {
                if (nb[k] < 0) continue;
                T* d = dx->row(nb[k]).data();
                for (int c = 0; c < cin; ++c) d[c] += src[c];
            }
        }
    }
    const auto db = dy.colwise().sum();
    for (Eigen::Index c = 0; c < db.size(); ++c) dbias[std::size_t(c)] += db[c];
}

/// Gathers 3x3x3 patches for active voxels straight from a dense (1, C, ...) input,
/// so voxels outside the mask but inside the grid contribute their values.
template <typename T>
RowMat<T> dense_patches(const ActiveLevel& lv, const Tensor<T>& input, int batch, std::size_t r0, std::size_t n) {
    const auto& s = input.shape();
    const int cin = s.channels;
    RowMat<T> col = RowMat<T>::Zero(Eigen::Index(n), 27 * cin);
    for (std::size_t r = 0; r < n; ++r) {
        const int v = lv.voxel[r0 + r];
        const int x = v % s.nx, y = (v / s.nx) % s.ny, z = v / (s.nx * s.ny);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ix = x + dx, iy = y + dy, iz = z + dz;
                    if (ix < 0 || iy < 0 || iz < 0 || ix >= s.nx || iy >= s.ny || iz >= s.nz) continue;
                    const int k = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                    for (int c = 0; c < cin; ++c) col(Eigen::Index(r), k * cin + c) = input(batch, c, ix, iy, iz);
                }
    }
    return col;
}

template <typename T>
RowMat<T> sparse_conv3_dense_input(const ActiveLevel& lv, const Tensor<T>& input, int batch, const ColMat<T>& w,
                                   const std::vector<T>& bias) {
    const std::size_t rows = lv.rows();
    RowMat<T> y(Eigen::Index(rows), w.cols());
    for (std::size_t r0 = 0; r0 < rows; r0 += kConvChunkRows) {
        const std::size_t n = std::min(kConvChunkRows, rows - r0);
        y.middleRows(Eigen::Index(r0), Eigen::Index(n)).noalias() = dense_patches(lv, input, batch, r0, n) * w;
    }
    const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), Eigen::Index(bias.size()));
    y.rowwise() += b;
    return y;
}

template <typename T>
void sparse_conv3_dense_input_backward(const ActiveLevel& lv, const Tensor<T>& input, int batch, const RowMat<T>& dy,
                                       ColMat<T>& dw, std::vector<T>& dbias) {
    const std::size_t rows = lv.rows();
    for (std::size_t r0 = 0; r0 < rows; r0 += kConvChunkRows) {
        const std::size_t n = std::min(kConvChunkRows, rows - r0);
        dw.noalias() += dense_patches(lv, input, batch, r0, n).transpose() * dy.middleRows(Eigen::Index(r0), Eigen::Index(n));
    }
    const auto db = dy.colwise().sum();
    for (Eigen::Index c = 0; c < db.size(); ++c) dbias[std::size_t(c)] += db[c];
}

template <typename T>
struct SparseGroupNormCache {
    RowMat<T> xhat;
    std::vector<double> rstd;
};

/// Group normalization over the active rows (= in-mask statistics).
template <typename T>
RowMat<T> sparse_group_norm(const RowMat<T>& x, int groups, const std::vector<T>& gamma, const std::vector<T>& beta,
                            SparseGroupNormCache<T>& cache) {
    const Eigen::Index rows = x.rows(), channels = x.cols();
    if (rows == 0) fail(ErrorKind::degenerate_mask, "group norm over an empty mask");
    const int cpg = int(channels) / groups;
    cache.xhat.resize(rows, channels);
    cache.rstd.assign(std::size_t(groups), 0.0);
    RowMat<T> y(rows, channels);
    for (int g = 0; g < groups; ++g) {
        const auto blk = x.middleCols(g * cpg, cpg);
        const double n = double(rows) * cpg;
        const double mean = double(blk.template cast<double>().sum()) / n;
        const double var = (blk.template cast<double>().array() - mean).square().sum() / n;
        const double rstd = 1.0 / std::sqrt(var + kGroupNormEps);
        cache.rstd[std::size_t(g)] = rstd;
        cache.xhat.middleCols(g * cpg, cpg) = ((blk.template cast<double>().array() - mean) * rstd).template cast<T>();
    }
    for (Eigen::Index c = 0; c < channels; ++c)
        y.col(c) = (cache.xhat.col(c).array() * gamma[std::size_t(c)] + beta[std::size_t(c)]).matrix();
    return y;
}

template <typename T>
RowMat<T> sparse_group_norm_backward(const RowMat<T>& dy, int groups, const std::vector<T>& gamma,
                                     const SparseGroupNormCache<T>& cache, std::vector<T>& dgamma,
                                     std::vector<T>& dbeta) {
    const Eigen::Index rows = dy.rows(), channels = dy.cols();
    const int cpg = int(channels) / groups;
    RowMat<T> dxhat(rows, channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
        dgamma[std::size_t(c)] += T((dy.col(c).template cast<double>().array() *
                                     cache.xhat.col(c).template cast<double>().array()).sum());
        dbeta[std::size_t(c)] += T(dy.col(c).template cast<double>().sum());
        dxhat.col(c) = dy.col(c) * gamma[std::size_t(c)];
    }
    RowMat<T> dx(rows, channels);
    for (int g = 0; g < groups; ++g) {
        const auto dxh = dxhat.middleCols(g * cpg, cpg).template cast<double>();
        const auto xh = cache.xhat.middleCols(g * cpg, cpg).template cast<double>();
        const double n = double(rows) * cpg;
        const double m1 = dxh.sum() / n;
        const double m2 = (dxh.array() * xh.array()).sum() / n;
        dx.middleCols(g * cpg, cpg) =
            (cache.rstd[std::size_t(g)] * (dxh.array() - m1 - xh.array() * m2)).template cast<T>();
    }
    return dx;
}

struct SparsePoolCache {
    std::vector<std::int32_t> argmax; // coarse rows * channels; fine row or -1
};

/// 2x max pooling from level `fine` to the next level.
template <typename T>
RowMat<T> sparse_maxpool(const ActiveLevel& fine, std::size_t coarse_rows, const RowMat<T>& x, SparsePoolCache& cache) {
    const Eigen::Index channels = x.cols();
    RowMat<T> y(Eigen::Index(coarse_rows), channels);
    cache.argmax.assign(coarse_rows * std::size_t(channels), -1);
    for (std::size_t p = 0; p < coarse_rows; ++p) {
        const auto b = fine.child_offsets[p], e = fine.child_offsets[p + 1];
        for (Eigen::Index c = 0; c < channels; ++c) {
            T best = fine.has_masked_child[p] ? T(0) : -std::numeric_limits<T>::infinity();
            std::int32_t arg = -1;
            for (auto k = b; k < e; ++k) {
                const auto r = fine.children[std::size_t(k)];
                const T v = x(r, c);
                if (v > best) {
                    best = v;
                    arg = r;
                }
            }
            y(Eigen::Index(p), c) = best;
            cache.argmax[p * std::size_t(channels) + std::size_t(c)] = arg;
        }
    }
    return y;
}

template <typename T>
RowMat<T> sparse_maxpool_backward(std::size_t fine_rows, const RowMat<T>& dy, const SparsePoolCache& cache) {
    const Eigen::Index channels = dy.cols();
    RowMat<T> dx = RowMat<T>::Zero(Eigen::Index(fine_rows), channels);
    for (Eigen::Index p = 0; p < dy.rows(); ++p)
        for (Eigen::Index c = 0; c < channels; ++c) {
            const auto a = cache.argmax[std::size_t(p) * std::size_t(channels) + std::size_t(c)];
            if (a >= 0) dx(a, c) += dy(p, c);
        }
    return dx;
}

/// Nearest x2 upsampling onto the active rows of `fine` (its own mask, no upsampled mask).
template <typename T>
RowMat<T> sparse_upsample(const ActiveLevel& fine, const RowMat<T>& coarse) {
    RowMat<T> y(Eigen::Index(fine.rows()), coarse.cols());
    for (std::size_t r = 0; r < fine.rows(); ++r) y.row(Eigen::Index(r)) = coarse.row(fine.parent[r]);
    return y;
}

template <typename T>
RowMat<T> sparse_upsample_backward(const ActiveLevel& fine, std::size_t coarse_rows, const RowMat<T>& dy) {
    RowMat<T> dx = RowMat<T>::Zero(Eigen::Index(coarse_rows), dy.cols());
    for (std::size_t r = 0; r < fine.rows(); ++r) dx.row(fine.parent[r]) += dy.row(Eigen::Index(r));
    return dx;
}

/// Scatter of active rows into a dense (1, C, nx, ny, nz) tensor, zero elsewhere.
template <typename T>
Tensor<T> scatter_dense(const ActiveLevel& lv, const RowMat<T>& x) {
    Tensor<T> out(Shape5{1, int(x.cols()), lv.dims.nx, lv.dims.ny, lv.dims.nz});
    for (std::size_t r = 0; r < lv.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) out[out.plane(0, int(c)) + std::size_t(lv.voxel[r])] = x(Eigen::Index(r), c);
    return out;
}

} // namespace celldiv::nn
