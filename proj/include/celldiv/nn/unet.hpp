#pragma once

// Masked 3D UNet: the mother-cell mask is carried through every level and
// channel. Encoder levels max-pool the mask, decoder levels reuse the encoder
// mask of the same level through the skip connection.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "celldiv/nn/sparse_ops.hpp"

namespace celldiv::nn {

struct UNetConfig {
    int depth = 3;
    int base_channels = 8;
    int convs_per_level = 2;
    int max_groups = 4;
    int in_channels = 2;
    int out_channels = 2;
    int kernel = 3;

    int channels_at(int level) const { return base_channels << level; }
    bool operator==(const UNetConfig&) const = default;
};

inline void validate(const UNetConfig& c) {
    if (c.depth < 2) fail(ErrorKind::invalid_argument, "UNet depth must be >= 2");
    if (c.base_channels < 1 || c.convs_per_level < 1 || c.max_groups < 1)
        fail(ErrorKind::invalid_argument, "UNet widths must be >= 1");
    if (c.in_channels != 2 || c.out_channels != 2 || c.kernel != 3)
        fail(ErrorKind::invalid_argument, "masked UNet uses 2 input channels, 2 output channels and 3^3 kernels");
}

/// Largest group count <= max_groups that divides `channels` (min(4, C) for power-of-two widths).
inline int groupnorm_groups(int channels, int max_groups) {
    for (int g = std::min(max_groups, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

/// Receptive field (voxels along one axis) of an activation at the coarsest
/// level: every 3^3 convolution adds 2 * jump and every 2x pooling window adds
/// one jump before the jump doubles.
inline int bottom_receptive_field(const UNetConfig& c) {
    int rf = 1, jump = 1;
    for (int level = 0; level < c.depth; ++level) {
        rf += c.convs_per_level * (c.kernel - 1) * jump;
        if (level + 1 < c.depth) {
            rf += jump;
            jump *= 2;
        }
    }
    return rf;
}

/// Receptive field of the output logits (encoder, decoder, 1x1 head).
inline int output_receptive_field(const UNetConfig& c) {
    int rf = bottom_receptive_field(c);
    int jump = 1 << (c.depth - 1);
    for (int level = c.depth - 2; level >= 0; --level) {
        jump /= 2;
        rf += c.convs_per_level * (c.kernel - 1) * jump;
    }
    return rf;
}

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    std::size_t size() const { return value.size(); }
};

/// Observer called with every layer output as active rows of a pyramid level.
template <typename T>
using LayerObserver = std::function<void(const std::string& name, const ActiveLevel& level, const RowMat<T>& rows)>;

/// Per-sample loss callback: logits (1, 2, nx, ny, nz) -> loss value and dLoss/dlogits.
template <typename T>
using LossFn = std::function<double(int sample, const Tensor<T>& logits, Tensor<T>& grad)>;

template <typename T>
class MaskedUNet {
public:
    struct ConvLayer {
        int weight = -1, bias = -1;
        int cin = 0, cout = 0, taps = 27;
    };
    struct NormLayer {
        int gamma = -1, beta = -1;
        int groups = 1;
    };
    struct Block {
        ConvLayer conv;
        NormLayer norm;
    };

    explicit MaskedUNet(UNetConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
        validate(cfg_);
        build_layout();
        std::mt19937_64 rng(seed);
        initialize(rng);
    }

    const UNetConfig& config() const { return cfg_; }
    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
    }

    template <typename U>
    MaskedUNet<U> cast() const {
        MaskedUNet<U> out(cfg_, 0);
        for (std::size_t i = 0; i < params_.size(); ++i)
            for (std::size_t j = 0; j < params_[i].size(); ++j) out.params()[i].value[j] = U(params_[i].value[j]);
        return out;
    }

    /// Logits (B, 2, nx, ny, nz); zero outside each sample's mask.
    Tensor<T> forward(const Tensor<T>& input, const Tensor<T>& mask, const LayerObserver<T>& observer = {}) const {
        check_inputs(input, mask);
        const auto& s = input.shape();
        Tensor<T> out(Shape5{s.batch, cfg_.out_channels, s.nx, s.ny, s.nz});
        for (int b = 0; b < s.batch; ++b) {
            Run run(*this, input, b, pyramid(mask, b), observer, false);
            write_logits(run, out, b);
        }
        return out;
    }

    /// Forward and backward over the batch; parameter gradients accumulate into Param::grad.
    std::vector<double> forward_backward(const Tensor<T>& input, const Tensor<T>& mask, const LossFn<T>& loss) {
        check_inputs(input, mask);
        const auto& s = input.shape();
        std::vector<double> losses;
        losses.reserve(std::size_t(s.batch));
        for (int b = 0; b < s.batch; ++b) {
            Run run(*this, input, b, pyramid(mask, b), {}, true);
            Tensor<T> logits(Shape5{1, cfg_.out_channels, s.nx, s.ny, s.nz});
            write_logits(run, logits, 0);
            Tensor<T> grad(logits.shape());
            losses.push_back(loss(b, logits, grad));
            const auto& lv = run.levels.front();
            RowMat<T> dlogits(Eigen::Index(lv.rows()), cfg_.out_channels);
            for (std::size_t r = 0; r < lv.rows(); ++r)
                for (int c = 0; c < cfg_.out_channels; ++c) dlogits(Eigen::Index(r), c) = grad[grad.plane(0, c) + std::size_t(lv.voxel[r])];
            run.backward(dlogits, params_);
        }
        return losses;
    }

private:
    // One forward pass over a single sample, with a tape for the backward pass.
    struct Run {
        const MaskedUNet& net;
        const Tensor<T>& input;
        int batch;
        std::vector<ActiveLevel> levels;
        const LayerObserver<T>& observer;
        bool record;
        std::vector<RowMat<T>> values;
        std::vector<int> node_level;
        std::vector<std::function<void(std::vector<RowMat<T>>&, std::vector<Param<T>>&)>> tape;
        int logits_node = -1;

        Run(const MaskedUNet& n, const Tensor<T>& in, int b, std::vector<ActiveLevel> lv, const LayerObserver<T>& obs,
            bool rec)
            : net(n), input(in), batch(b), levels(std::move(lv)), observer(obs), record(rec) {
            run();
        }

        int push(RowMat<T> v, int level, const std::string& name) {
            values.push_back(std::move(v));
            node_level.push_back(level);
            if (observer) observer(name, levels[std::size_t(level)], values.back());
            return int(values.size()) - 1;
        }

        static void add_grad(std::vector<RowMat<T>>& grads, int node, const RowMat<T>& g) {
            auto& dst = grads[std::size_t(node)];
            if (dst.size() == 0)
                dst = g;
            else
                dst += g;
        }

        int conv(int x, int level, const ConvLayer& layer, const std::string& name) {
            const auto& p = net.params_;
            auto w = std::make_shared<ColMat<T>>(weights_as_matrix(p[std::size_t(layer.weight)].value, layer.cout, layer.cin, layer.taps));
            const auto& lv = levels[std::size_t(level)];
            RowMat<T> y;
            if (x < 0) {
                y = sparse_conv3_dense_input(lv, input, batch, *w, p[std::size_t(layer.bias)].value);
            } else if (layer.taps == 27) {
                y = sparse_conv3(lv, values[std::size_t(x)], *w, p[std::size_t(layer.bias)].value);
            } else {
                y = values[std::size_t(x)] * *w;
                const Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(p[std::size_t(layer.bias)].value.data(), layer.cout);
                y.rowwise() += b;
            }
            const int out = push(std::move(y), level, name);
            if (record)
                tape.push_back([this, x, out, level, layer, w](std::vector<RowMat<T>>& grads, std::vector<Param<T>>& params) {
                    const auto& dy = grads[std::size_t(out)];
                    if (dy.size() == 0) return;
                    const auto& lv = levels[std::size_t(level)];
                    ColMat<T> dw = ColMat<T>::Zero(w->rows(), w->cols());
                    auto& dbias = params[std::size_t(layer.bias)].grad;
                    if (x < 0) {
                        sparse_conv3_dense_input_backward(lv, input, batch, dy, dw, dbias);
                    } else if (layer.taps == 27) {
                        RowMat<T> dx = RowMat<T>::Zero(values[std::size_t(x)].rows(), values[std::size_t(x)].cols());
                        sparse_conv3_backward(lv, values[std::size_t(x)], *w, dy, dw, dbias, &dx);
                        add_grad(grads, x, dx);
                    } else {
                        dw.noalias() += values[std::size_t(x)].transpose() * dy;
                        const auto db = dy.colwise().sum();
                        for (Eigen::Index c = 0; c < db.size(); ++c) dbias[std::size_t(c)] += db[c];
                        RowMat<T> dx = dy * w->transpose();
                        add_grad(grads, x, dx);
                    }
                    accumulate_matrix_into_weights(dw, params[std::size_t(layer.weight)].grad, layer.cout, layer.cin, layer.taps);
                });
            return out;
        }

        int norm(int x, int level, const NormLayer& layer, const std::string& name) {
            const auto& p = net.params_;
            auto cache = std::make_shared<SparseGroupNormCache<T>>();
            RowMat<T> y = sparse_group_norm(values[std::size_t(x)], layer.groups, p[std::size_t(layer.gamma)].value,
                                            p[std::size_t(layer.beta)].value, *cache);
            const int out = push(std::move(y), level, name);
            if (record)
                tape.push_back([x, out, layer, cache](std::vector<RowMat<T>>& grads, std::vector<Param<T>>& params) {
                    const auto& dy = grads[std::size_t(out)];
                    if (dy.size() == 0) return;
                    RowMat<T> dx = sparse_group_norm_backward(dy, layer.groups, params[std::size_t(layer.gamma)].value, *cache,
                                                              params[std::size_t(layer.gamma)].grad,
                                                              params[std::size_t(layer.beta)].grad);
                    add_grad(grads, x, dx);
                });
            return out;
        }

        int relu(int x, int level, const std::string& name) {
            const int out = push(values[std::size_t(x)].cwiseMax(T(0)), level, name);
            if (record)
                tape.push_back([this, x, out](std::vector<RowMat<T>>& grads, std::vector<Param<T>>&) {
                    const auto& dy = grads[std::size_t(out)];
                    if (dy.size() == 0) return;
                    RowMat<T> dx = (values[std::size_t(out)].array() > T(0)).select(dy, T(0));
                    add_grad(grads, x, dx);
                });
            return out;
        }

        int pool(int x, int fine_level, const std::string& name) {
            auto cache = std::make_shared<SparsePoolCache>();
            const auto& fine = levels[std::size_t(fine_level)];
            const std::size_t coarse_rows = levels[std::size_t(fine_level + 1)].rows();
            const int out = push(sparse_maxpool(fine, coarse_rows, values[std::size_t(x)], *cache), fine_level + 1, name);
            if (record)
                tape.push_back([this, x, out, cache, fine_level](std::vector<RowMat<T>>& grads, std::vector<Param<T>>&) {
                    const auto& dy = grads[std::size_t(out)];
                    if (dy.size() == 0) return;
                    add_grad(grads, x, sparse_maxpool_backward(levels[std::size_t(fine_level)].rows(), dy, *cache));
                });
            return out;
        }

        int upsample_concat(int coarse, int skip, int fine_level, const std::string& name) {
            const auto& fine = levels[std::size_t(fine_level)];
            const auto& up = values[std::size_t(coarse)];
            const auto& sk = values[std::size_t(skip)];
            RowMat<T> y(Eigen::Index(fine.rows()), up.cols() + sk.cols());
            y.leftCols(up.cols()) = sparse_upsample(fine, up);
            y.rightCols(sk.cols()) = sk;
            const int out = push(std::move(y), fine_level, name);
            if (record)
                tape.push_back([this, coarse, skip, out, fine_level](std::vector<RowMat<T>>& grads, std::vector<Param<T>>&) {
                    const auto& dy = grads[std::size_t(out)];
                    if (dy.size() == 0) return;
                    const Eigen::Index cu = values[std::size_t(coarse)].cols();
                    add_grad(grads, coarse,
                             sparse_upsample_backward<T>(levels[std::size_t(fine_level)], values[std::size_t(coarse)].rows(),
                                                         dy.leftCols(cu)));
                    add_grad(grads, skip, dy.rightCols(dy.cols() - cu));
                });
            return out;
        }

        int block(int x, int level, const Block& b, const std::string& name) {
            const int c = conv(x, level, b.conv, name + ".conv");
            const int n = norm(c, level, b.norm, name + ".norm");
            return relu(n, level, name + ".relu");
        }

        void run() {
            const auto& cfg = net.cfg_;
            std::vector<int> skips(std::size_t(cfg.depth), -1);
            int x = -1;
            for (int d = 0; d < cfg.depth; ++d) {
                if (d > 0) x = pool(x, d - 1, "enc" + std::to_string(d) + ".pool");
                for (int j = 0; j < cfg.convs_per_level; ++j)
                    x = block(x, d, net.enc_[std::size_t(d)][std::size_t(j)], "enc" + std::to_string(d) + ".block" + std::to_string(j));
                skips[std::size_t(d)] = x;
            }
            for (int d = cfg.depth - 2; d >= 0; --d) {
                x = upsample_concat(x, skips[std::size_t(d)], d, "dec" + std::to_string(d) + ".upcat");
                for (int j = 0; j < cfg.convs_per_level; ++j)
                    x = block(x, d, net.dec_[std::size_t(d)][std::size_t(j)], "dec" + std::to_string(d) + ".block" + std::to_string(j));
            }
            logits_node = conv(x, 0, net.head_, "head");
        }

        void backward(const RowMat<T>& dlogits, std::vector<Param<T>>& params) {
            std::vector<RowMat<T>> grads(values.size());
            grads[std::size_t(logits_node)] = dlogits;
            for (auto it = tape.rbegin(); it != tape.rend(); ++it) (*it)(grads, params);
        }
    };

    void check_inputs(const Tensor<T>& input, const Tensor<T>& mask) const {
        const auto& s = input.shape();
        const auto& m = mask.shape();
        if (s.channels != cfg_.in_channels) fail(ErrorKind::shape_mismatch, "input must have 2 channels");
        if (m.channels != 1 || !s.same_spatial(m) || (m.batch != s.batch && m.batch != 1))
            fail(ErrorKind::shape_mismatch, "mask must match the input spatial dims");
    }

    std::vector<ActiveLevel> pyramid(const Tensor<T>& mask, int b) const {
        const auto& m = mask.shape();
        const int mb = m.batch == 1 ? 0 : b;
        std::vector<std::uint8_t> bytes(m.spatial());
        const auto base = mask.plane(mb, 0);
        for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask[base + i] != T(0);
        return build_active_pyramid(bytes, m.dims(), cfg_.depth);
    }

    void write_logits(const Run& run, Tensor<T>& out, int b) const {
        const auto& lv = run.levels.front();
        const auto& logits = run.values[std::size_t(run.logits_node)];
        for (std::size_t r = 0; r < lv.rows(); ++r)
            for (int c = 0; c < cfg_.out_channels; ++c)
                out[out.plane(b, c) + std::size_t(lv.voxel[r])] = logits(Eigen::Index(r), c);
    }

    int add_param(const std::string& name, std::vector<int> shape) {
        std::size_t n = 1;
        for (int s : shape) n *= std::size_t(s);
        params_.push_back(Param<T>{name, std::move(shape), std::vector<T>(n, T(0)), std::vector<T>(n, T(0))});
        return int(params_.size()) - 1;
    }

    Block make_block(const std::string& name, int cin, int cout) {
        Block b;
        b.conv = {add_param(name + ".conv.weight", {cout, cin, 3, 3, 3}), add_param(name + ".conv.bias", {cout}), cin, cout, 27};
        b.norm = {add_param(name + ".norm.gamma", {cout}), add_param(name + ".norm.beta", {cout}),
                  groupnorm_groups(cout, cfg_.max_groups)};
        return b;
    }

    void build_layout() {
        enc_.resize(std::size_t(cfg_.depth));
        for (int d = 0; d < cfg_.depth; ++d) {
            int cin = d == 0 ? cfg_.in_channels : cfg_.channels_at(d - 1);
            for (int j = 0; j < cfg_.convs_per_level; ++j) {
                enc_[std::size_t(d)].push_back(make_block("enc" + std::to_string(d) + ".block" + std::to_string(j), cin, cfg_.channels_at(d)));
                cin = cfg_.channels_at(d);
            }
        }
        dec_.resize(std::size_t(cfg_.depth - 1));
        for (int d = cfg_.depth - 2; d >= 0; --d) {
            int cin = cfg_.channels_at(d + 1) + cfg_.channels_at(d);
            for (int j = 0; j < cfg_.convs_per_level; ++j) {
                dec_[std::size_t(d)].push_back(make_block("dec" + std::to_string(d) + ".block" + std::to_string(j), cin, cfg_.channels_at(d)));
                cin = cfg_.channels_at(d);
            }
        }
        const int c0 = cfg_.channels_at(0);
        head_ = {add_param("head.weight", {cfg_.out_channels, c0, 1, 1, 1}), add_param("head.bias", {cfg_.out_channels}), c0,
                 cfg_.out_channels, 1};
    }

    template <class Rng>
    void init_conv(const ConvLayer& c, Rng& rng) {
        const double bound = std::sqrt(6.0 / double(c.cin * c.taps));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& w : params_[std::size_t(c.weight)].value) w = T(u(rng));
    }

    template <class Rng>
    void initialize(Rng& rng) {
        auto init_block = [&](const Block& b) {
            init_conv(b.conv, rng);
            std::fill(params_[std::size_t(b.norm.gamma)].value.begin(), params_[std::size_t(b.norm.gamma)].value.end(), T(1));
        };
        for (const auto& level : enc_)
            for (const auto& b : level) init_block(b);
        for (int d = cfg_.depth - 2; d >= 0; --d)
            for (const auto& b : dec_[std::size_t(d)]) init_block(b);
        init_conv(head_, rng);
    }

    template <typename U>
    friend class MaskedUNet;

    UNetConfig cfg_;
    std::vector<Param<T>> params_;
    std::vector<std::vector<Block>> enc_;
    std::vector<std::vector<Block>> dec_;
    ConvLayer head_;

public:
    const std::vector<std::vector<Block>>& encoder_blocks() const { return enc_; }
    const std::vector<std::vector<Block>>& decoder_blocks() const { return dec_; }
    const ConvLayer& head() const { return head_; }
};

/// One-hot encoding of the mother mask followed by the network; logits masked to the cell.
template <typename T>
Tensor<T> unet_forward(const LabelGrid& mother_mask, const MaskedUNet<T>& model) {
    return model.forward(one_hot_input<T>(mother_mask), mask_tensor<T>(mother_mask));
}

} // namespace celldiv::nn
