#pragma once

// Dense evaluation of a MaskedUNet built from the full-grid reference ops.
// Slow; used to cross-check the active-voxel engine and to inspect every
// layer including its outside-mask values.

#include <functional>
#include <string>

#include "celldiv/nn/unet.hpp"

namespace celldiv::nn {

template <typename T>
using DenseObserver = std::function<void(const std::string& name, const Tensor<T>& values, const Tensor<T>& mask)>;

template <typename T>
Tensor<T> reference_forward(const MaskedUNet<T>& net, const Tensor<T>& input, const Tensor<T>& mask,
                            const DenseObserver<T>& observer = {}) {
    using Net = MaskedUNet<T>;
    const auto& cfg = net.config();
    const auto& p = net.params();
    auto conv_weights = [&](const typename Net::ConvLayer& c) {
        ConvWeights<T> w(c.cout, c.cin, c.taps == 27 ? 3 : 1);
        w.weight = p[std::size_t(c.weight)].value;
        w.bias = p[std::size_t(c.bias)].value;
        return w;
    };
    auto emit = [&](const std::string& name, const Tensor<T>& v, const Tensor<T>& m) {
        if (observer) observer(name, v, m);
    };
    auto block = [&](const Tensor<T>& x, const Tensor<T>& m, const typename Net::Block& b, const std::string& name) {
        Tensor<T> c = conv3d(x, conv_weights(b.conv), m);
        emit(name + ".conv", c, m);
        Tensor<T> n = masked_group_norm(c, m, b.norm.groups, p[std::size_t(b.norm.gamma)].value, p[std::size_t(b.norm.beta)].value);
        emit(name + ".norm", n, m);
        Tensor<T> r = relu(n);
        emit(name + ".relu", r, m);
        return r;
    };

    std::vector<Tensor<T>> masks{mask};
    std::vector<Tensor<T>> skips;
    Tensor<T> x = input;
    for (int d = 0; d < cfg.depth; ++d) {
        if (d > 0) {
            auto pooled = maxpool2(x, masks.back());
            x = std::move(pooled.output);
            masks.push_back(std::move(pooled.mask));
            emit("enc" + std::to_string(d) + ".pool", x, masks.back());
        }
        for (int j = 0; j < cfg.convs_per_level; ++j)
            x = block(x, masks[std::size_t(d)], net.encoder_blocks()[std::size_t(d)][std::size_t(j)],
                      "enc" + std::to_string(d) + ".block" + std::to_string(j));
        skips.push_back(x);
    }
    for (int d = cfg.depth - 2; d >= 0; --d) {
        x = upsample_concat(x, skips[std::size_t(d)], masks[std::size_t(d)]);
        emit("dec" + std::to_string(d) + ".upcat", x, masks[std::size_t(d)]);
        for (int j = 0; j < cfg.convs_per_level; ++j)
            x = block(x, masks[std::size_t(d)], net.decoder_blocks()[std::size_t(d)][std::size_t(j)],
                      "dec" + std::to_string(d) + ".block" + std::to_string(j));
    }
    Tensor<T> logits = conv3d(x, conv_weights(net.head()), mask);
    emit("head", logits, mask);
    return logits;
}

} // namespace celldiv::nn
