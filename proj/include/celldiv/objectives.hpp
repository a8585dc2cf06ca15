#pragma once

// Masked cross-entropy and accuracy against a division target, plus their
// label-symmetric variants. Logit channel 0 scores daughter 1, channel 1
// scores daughter 2; only voxels with target label > 0 count.

#include <cmath>
#include <ostream>
#include <string>

#include "celldiv/nn/tensor.hpp"
#include "celldiv/patterns.hpp"

namespace celldiv {

enum class Permutation { identity, swapped };

inline const char* to_string(Permutation p) { return p == Permutation::identity ? "identity" : "swapped"; }

enum class AccuracyMode {
    max,             // max over both labelings
    loss_permutation // labeling chosen by the symmetric loss
};

namespace detail {

template <typename T>
void check_logits(const nn::Tensor<T>& logits, const LabelGrid& target, int b) {
    const auto& s = logits.shape();
    if (s.channels != 2 || s.dims() != target.dims() || b < 0 || b >= s.batch)
        fail(ErrorKind::shape_mismatch, "logits must be 2-channel and match the target grid");
}

// -log softmax of the labelled channel; d = l(other) - l(label)
inline double softplus(double d) { return d > 0 ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d)); }

struct PairSums {
    double identity = 0;
    double swapped = 0;
    std::size_t count = 0;
};

// Both labelings accumulated in one pass so swapping the target just swaps the two sums.
template <typename T>
PairSums cross_entropy_pair(const nn::Tensor<T>& logits, const LabelGrid& target, int b) {
    check_logits(logits, target, b);
    const std::size_t p0 = logits.plane(b, 0), p1 = logits.plane(b, 1);
    PairSums s;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto y = target[i];
        if (y == 0) continue;
        const double d = double(logits[p1 + i]) - double(logits[p0 + i]);
        const double ce1 = softplus(d), ce2 = softplus(-d);
        s.identity += y == 1 ? ce1 : ce2;
        s.swapped += y == 1 ? ce2 : ce1;
        ++s.count;
    }
    if (s.count == 0) fail(ErrorKind::empty_mask, "target has no in-mask voxels");
    return s;
}

template <typename T>
PairSums accuracy_pair(const nn::Tensor<T>& logits, const LabelGrid& target, int b) {
    check_logits(logits, target, b);
    const std::size_t p0 = logits.plane(b, 0), p1 = logits.plane(b, 1);
    PairSums s;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto y = target[i];
        if (y == 0) continue;
        const std::uint8_t pred = logits[p1 + i] > logits[p0 + i] ? 2 : 1;
        s.identity += pred == y;
        s.swapped += pred != y;
        ++s.count;
    }
    if (s.count == 0) fail(ErrorKind::empty_mask, "target has no in-mask voxels");
    return s;
}

} // namespace detail

template <typename T>
double masked_cross_entropy(const nn::Tensor<T>& logits, const LabelGrid& target, int b = 0) {
    const auto s = detail::cross_entropy_pair(logits, target, b);
    return s.identity / double(s.count);
}

template <typename T>
double masked_accuracy(const nn::Tensor<T>& logits, const LabelGrid& target, int b = 0) {
    const auto s = detail::accuracy_pair(logits, target, b);
    return s.identity / double(s.count);
}

struct SymmetricValue {
    double value = 0;
    Permutation permutation = Permutation::identity;
};

/// min(CE(y), CE(swap y)); ties keep the identity labeling.
template <typename T>
SymmetricValue symmetric_loss(const nn::Tensor<T>& logits, const LabelGrid& target, int b = 0) {
    const auto s = detail::cross_entropy_pair(logits, target, b);
    const double a = s.identity / double(s.count), w = s.swapped / double(s.count);
    return w < a ? SymmetricValue{w, Permutation::swapped} : SymmetricValue{a, Permutation::identity};
}

template <typename T>
SymmetricValue symmetric_accuracy(const nn::Tensor<T>& logits, const LabelGrid& target,
                                  AccuracyMode mode = AccuracyMode::max, int b = 0) {
    const auto s = detail::accuracy_pair(logits, target, b);
    const double a = s.identity / double(s.count), w = s.swapped / double(s.count);
    if (mode == AccuracyMode::loss_permutation)
        return symmetric_loss(logits, target, b).permutation == Permutation::swapped
                   ? SymmetricValue{w, Permutation::swapped}
                   : SymmetricValue{a, Permutation::identity};
    return w > a ? SymmetricValue{w, Permutation::swapped} : SymmetricValue{a, Permutation::identity};
}

/// Symmetric loss and its gradient w.r.t. the logits of sample b (written into grad, same shape).
template <typename T>
SymmetricValue symmetric_loss_grad(const nn::Tensor<T>& logits, const LabelGrid& target, nn::Tensor<T>& grad, int b = 0) {
    const auto loss = symmetric_loss(logits, target, b);
    const std::size_t p0 = logits.plane(b, 0), p1 = logits.plane(b, 1);
    std::size_t count = 0;
    for (std::size_t i = 0; i < target.size(); ++i) count += target[i] != 0;
    const double scale = 1.0 / double(count);
    for (std::size_t i = 0; i < target.size(); ++i) {
        grad[p0 + i] = T(0);
        grad[p1 + i] = T(0);
        auto y = target[i];
        if (y == 0) continue;
        if (loss.permutation == Permutation::swapped) y = std::uint8_t(3 - y);
        const double d = double(logits[p1 + i]) - double(logits[p0 + i]);
        const double q2 = 1.0 / (1.0 + std::exp(-d)); // softmax probability of channel 1
        const double q1 = 1.0 - q2;
        grad[p0 + i] = T((q1 - (y == 1 ? 1.0 : 0.0)) * scale);
        grad[p1 + i] = T((q2 - (y == 2 ? 1.0 : 0.0)) * scale);
    }
    return loss;
}

/// Argmax labels inside the mother mask, background 0 (ties -> daughter 1).
template <typename T>
LabelGrid predict_labels(const nn::Tensor<T>& logits, const LabelGrid& mother, int b = 0) {
    detail::check_logits(logits, mother, b);
    LabelGrid out(mother.dims(), mother.voxel_size());
    const std::size_t p0 = logits.plane(b, 0), p1 = logits.plane(b, 1);
    for (std::size_t i = 0; i < mother.size(); ++i)
        if (mother[i] != 0) out[i] = logits[p1 + i] > logits[p0 + i] ? 2 : 1;
    return out;
}

struct EvalRecord {
    std::string cell_id;
    double accuracy = 0;
    double loss = 0;
    double volume_ratio = 0;
    Permutation permutation = Permutation::identity;
};

inline constexpr const char* kEvalCsvHeader = "cell_id,accuracy,loss,volume_ratio,permutation";

inline void write_csv_row(std::ostream& os, const EvalRecord& r) {
    os << r.cell_id << ',' << r.accuracy << ',' << r.loss << ',' << r.volume_ratio << ',' << to_string(r.permutation) << '\n';
}

template <typename T>
EvalRecord evaluate_logits(const std::string& id, const nn::Tensor<T>& logits, const LabelGrid& target,
                           AccuracyMode mode = AccuracyMode::max, int b = 0) {
    const auto loss = symmetric_loss(logits, target, b);
    const auto acc = symmetric_accuracy(logits, target, mode, b);
    return {id, acc.value, loss.value, volume_ratio(predict_labels(logits, binarize(target), b)), acc.permutation};
}

} // namespace celldiv
