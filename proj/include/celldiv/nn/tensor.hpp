#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "celldiv/errors.hpp"
#include "celldiv/label_grid.hpp"

namespace celldiv::nn {

/// (batch, channels, nx, ny, nz)
struct Shape5 {
    int batch = 1;
    int channels = 1;
    int nx = 1;
    int ny = 1;
    int nz = 1;

    std::size_t spatial() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
    std::size_t numel() const { return std::size_t(batch) * std::size_t(channels) * spatial(); }
    Dims dims() const { return {nx, ny, nz}; }
    bool same_spatial(const Shape5& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
    bool operator==(const Shape5&) const = default;
};

/// Dense n-d array in (b, c, z, y, x) memory order (x fastest).
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape5 shape, T fill = T(0)) : shape_(shape), values_(shape.numel(), fill) {
        if (shape.batch < 1 || shape.channels < 1 || shape.nx < 1 || shape.ny < 1 || shape.nz < 1)
            fail(ErrorKind::shape_mismatch, "tensor dims must be >= 1");
    }

    const Shape5& shape() const { return shape_; }
    std::size_t numel() const { return values_.size(); }

    std::size_t offset(int b, int c, int x, int y, int z) const {
        return (((std::size_t(b) * std::size_t(shape_.channels) + std::size_t(c)) * std::size_t(shape_.nz) +
                 std::size_t(z)) * std::size_t(shape_.ny) + std::size_t(y)) * std::size_t(shape_.nx) + std::size_t(x);
    }
    /// Start of the (b, c) spatial block.
    std::size_t plane(int b, int c) const {
        return (std::size_t(b) * std::size_t(shape_.channels) + std::size_t(c)) * shape_.spatial();
    }

    T& operator()(int b, int c, int x, int y, int z) { return values_[offset(b, c, x, y, z)]; }
    T operator()(int b, int c, int x, int y, int z) const { return values_[offset(b, c, x, y, z)]; }
    T& operator[](std::size_t i) { return values_[i]; }
    T operator[](std::size_t i) const { return values_[i]; }

    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }

    bool has_grad() const { return grad_.has_value(); }
    std::vector<T>& grad() {
        if (!grad_) grad_.emplace(values_.size(), T(0));
        return *grad_;
    }
    const std::optional<std::vector<T>>& grad_opt() const { return grad_; }
    void zero_grad() { grad_.reset(); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < values_.size(); ++i) out[i] = U(values_[i]);
        return out;
    }

private:
    Shape5 shape_{};
    std::vector<T> values_;
    std::optional<std::vector<T>> grad_;
};

/// Binary (1, 1, nx, ny, nz) mask tensor from the nonzero voxels of a grid.
template <typename T>
Tensor<T> mask_tensor(const LabelGrid& grid) {
    const auto& d = grid.dims();
    Tensor<T> t(Shape5{1, 1, d.nx, d.ny, d.nz});
    for (std::size_t i = 0; i < grid.size(); ++i) t[i] = grid[i] != 0 ? T(1) : T(0);
    return t;
}

/// Two-channel one-hot encoding: channel 0 = background, channel 1 = cell.
template <typename T>
Tensor<T> one_hot_input(const LabelGrid& mask) {
    const auto& d = mask.dims();
    Tensor<T> t(Shape5{1, 2, d.nx, d.ny, d.nz});
    const std::size_t n = mask.size();
    for (std::size_t i = 0; i < n; ++i) {
        const bool in = mask[i] != 0;
        t[i] = in ? T(0) : T(1);
        t[n + i] = in ? T(1) : T(0);
    }
    return t;
}

} // namespace celldiv::nn
