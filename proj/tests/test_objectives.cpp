#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "celldiv/division_rules.hpp"
#include "celldiv/objectives.hpp"
#include "celldiv/shapes.hpp"

using namespace celldiv;
using nn::Shape5;
using nn::Tensor;

namespace {

LabelGrid half_box(int nx, int ny, int nz) {
    LabelGrid g(Dims{nx + 2, ny + 2, nz + 2});
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) g(x + 1, y + 1, z + 1) = x < nx / 2 ? 1 : 2;
    return g;
}

LabelGrid random_pattern(std::mt19937_64& rng, Dims d) {
    std::uniform_int_distribution<int> u(0, 2);
    LabelGrid g(d);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::uint8_t(u(rng));
    g[0] = 1;
    g[1] = 2;
    return g;
}

Tensor<float> random_logits(std::mt19937_64& rng, Dims d, float scale = 2.0f) {
    std::normal_distribution<float> g(0.0f, scale);
    Tensor<float> t(Shape5{1, 2, d.nx, d.ny, d.nz});
    for (auto& v : t.values()) v = g(rng);
    return t;
}

Tensor<float> logits_for(const LabelGrid& labels, float mag) {
    const auto& d = labels.dims();
    Tensor<float> t(Shape5{1, 2, d.nx, d.ny, d.nz});
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 0) continue;
        t[i] = labels[i] == 1 ? mag : -mag;
        t[n + i] = -t[i];
    }
    return t;
}

// Straightforward softmax NLL in long double.
double reference_ce(const Tensor<float>& logits, const LabelGrid& target) {
    const std::size_t n = target.size();
    long double sum = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (target[i] == 0) continue;
        const long double a = logits[i], b = logits[n + i];
        const long double m = std::max(a, b);
        const long double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
        sum += lse - (target[i] == 1 ? a : b);
        ++count;
    }
    return double(sum / count);
}

} // namespace

TEST(CrossEntropy, UniformLogitsGiveLn2) {
    const auto t = half_box(6, 4, 4);
    Tensor<float> l(Shape5{1, 2, 8, 6, 6}, 0.3f);
    EXPECT_NEAR(masked_cross_entropy(l, t), std::log(2.0), 1e-12);
    const auto s = symmetric_loss(l, t);
    EXPECT_NEAR(s.value, std::log(2.0), 1e-12);
    EXPECT_EQ(s.permutation, Permutation::identity);
}

TEST(CrossEntropy, SaturatedAgreementIsNearZero) {
    const auto t = half_box(6, 4, 4);
    EXPECT_LT(masked_cross_entropy(logits_for(t, 20.0f), t), 1e-8);
}

TEST(CrossEntropy, SingleVoxelHandCase) {
    LabelGrid t(Dims{1, 1, 1});
    t[0] = 1;
    Tensor<float> l(Shape5{1, 2, 1, 1, 1});
    l[0] = 1.0f;
    l[1] = 0.0f;
    EXPECT_NEAR(masked_cross_entropy(l, t), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
    EXPECT_NEAR(masked_cross_entropy(l, t), 0.3133, 5e-5);
}

TEST(CrossEntropy, MatchesReferenceOnRandomInputs) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Dims d{5, 4, 3};
        const auto t = random_pattern(rng, d);
        const auto l = random_logits(rng, d, 4.0f);
        EXPECT_NEAR(masked_cross_entropy(l, t), reference_ce(l, t), 1e-12);
        EXPECT_NEAR(masked_cross_entropy(l, swap_labels(t)), reference_ce(l, swap_labels(t)), 1e-12);
    }
}

TEST(CrossEntropy, EmptyMaskAndShapeErrors) {
    LabelGrid t(Dims{3, 3, 3});
    Tensor<float> l(Shape5{1, 2, 3, 3, 3});
    try {
        masked_cross_entropy(l, t);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_mask);
    }
    EXPECT_THROW(masked_accuracy(Tensor<float>(Shape5{1, 2, 3, 3, 2}), half_box(2, 2, 2)), Error);
}

TEST(Accuracy, Examples) {
    const auto t = half_box(6, 4, 4);
    EXPECT_EQ(masked_accuracy(logits_for(t, 5.0f), t), 1.0);
    LabelGrid all1 = binarize(t);
    EXPECT_EQ(masked_accuracy(logits_for(all1, 5.0f), t), 0.5);
    // equal logits resolve to label 1
    Tensor<float> tie(Shape5{1, 2, 8, 6, 6}, 0.0f);
    EXPECT_EQ(masked_accuracy(tie, t), 0.5);
    EXPECT_EQ(predict_labels(tie, binarize(t)), all1);
}

TEST(Accuracy, ErodedPatternAsPrediction) {
    const auto cell = generate_ellipsoid({ShapeKind::ellipsoid, 2, 1.2, 12000, 0});
    const auto target = errera_axis_rule(cell).pattern;
    const double v = double(cell.foreground_count());
    for (int k = 1; k <= 4; ++k) {
        const auto shifted = shift_plane_by_erosion(target, k, 1);
        std::size_t moved = 0;
        for (std::size_t i = 0; i < cell.size(); ++i) moved += shifted.grid()[i] != target.grid()[i];
        EXPECT_DOUBLE_EQ(masked_accuracy(logits_for(shifted.grid(), 3.0f), target.grid()), 1.0 - double(moved) / v);
    }
}

TEST(SwapLabels, FormulaAndInvolution) {
    LabelGrid g(Dims{3, 1, 1});
    g[0] = 0;
    g[1] = 1;
    g[2] = 2;
    const auto s = swap_labels(g);
    EXPECT_EQ(s[0], 0);
    EXPECT_EQ(s[1], 2);
    EXPECT_EQ(s[2], 1);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10; ++i) {
        const auto p = random_pattern(rng, Dims{4, 5, 3});
        EXPECT_EQ(swap_labels(swap_labels(p)), p);
    }
}

TEST(SymmetricLoss, SwappedPerfectPrediction) {
    const auto t = half_box(6, 4, 4);
    const auto s = symmetric_loss(logits_for(swap_labels(t), 20.0f), t);
    EXPECT_LT(s.value, 1e-8);
    EXPECT_EQ(s.permutation, Permutation::swapped);
    const auto a = symmetric_accuracy(logits_for(swap_labels(t), 20.0f), t);
    EXPECT_EQ(a.value, 1.0);
    EXPECT_EQ(a.permutation, Permutation::swapped);
}

TEST(SymmetricLoss, LabelSwapInvarianceIsBitExact) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const Dims d{6, 5, 4};
        const auto t = random_pattern(rng, d);
        const auto l = random_logits(rng, d);
        const auto sw = swap_labels(t);
        EXPECT_EQ(symmetric_loss(l, t).value, symmetric_loss(l, sw).value);
        EXPECT_EQ(symmetric_accuracy(l, t).value, symmetric_accuracy(l, sw).value);
        EXPECT_EQ(symmetric_accuracy(l, t, AccuracyMode::loss_permutation).value,
                  symmetric_accuracy(l, sw, AccuracyMode::loss_permutation).value);
    }
}

TEST(SymmetricAccuracy, MaxPropertiesAndRandomBaseline) {
    std::mt19937_64 rng(4);
    double mean = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = half_box(6, 4, 4);
        const auto l = random_logits(rng, t.dims());
        const double plain = masked_accuracy(l, t), sym = symmetric_accuracy(l, t).value;
        EXPECT_GE(sym, 0.5);
        EXPECT_EQ(sym, std::max(plain, masked_accuracy(l, swap_labels(t))));
        if (plain >= 0.5) EXPECT_EQ(sym, plain);
        const double lp = symmetric_accuracy(l, t, AccuracyMode::loss_permutation).value;
        EXPECT_LE(lp, sym);
        mean += sym;
    }
    EXPECT_GE(mean / 100, 0.5);
}

TEST(SymmetricLoss, SaturationDrivesAccuracyToOne) {
    const auto t = half_box(8, 6, 4);
    for (float mag : {2.0f, 6.0f, 12.0f, 20.0f}) {
        const auto l = logits_for(swap_labels(t), mag);
        const double loss = symmetric_loss(l, t).value;
        EXPECT_NEAR(loss, std::log1p(std::exp(-2.0 * mag)), 1e-9);
        EXPECT_EQ(symmetric_accuracy(l, t).value, 1.0);
    }
}

TEST(SymmetricLoss, BackgroundLogitsAreIgnored) {
    std::mt19937_64 rng(5);
    const auto t = half_box(5, 4, 4);
    auto l = random_logits(rng, t.dims());
    const auto loss = symmetric_loss(l, t).value;
    const auto acc = symmetric_accuracy(l, t).value;
    const std::size_t n = t.size();
    std::normal_distribution<float> g(0, 50);
    for (std::size_t i = 0; i < n; ++i)
        if (t[i] == 0) {
            l[i] = g(rng);
            l[n + i] = g(rng);
        }
    EXPECT_EQ(symmetric_loss(l, t).value, loss);
    EXPECT_EQ(symmetric_accuracy(l, t).value, acc);
}

TEST(SymmetricLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    const Dims d{4, 3, 3};
    const auto t = random_pattern(rng, d);
    std::normal_distribution<double> g(0, 1.5);
    Tensor<double> l(Shape5{1, 2, d.nx, d.ny, d.nz}), grad(l.shape());
    for (auto& v : l.values()) v = g(rng);
    symmetric_loss_grad(l, t, grad);
    const auto perm = symmetric_loss(l, t).permutation;
    for (std::size_t i = 0; i < l.numel(); ++i) {
        auto up = l, dn = l;
        up[i] += 1e-6;
        dn[i] -= 1e-6;
        ASSERT_EQ(symmetric_loss(up, t).permutation, perm);
        const double num = (symmetric_loss(up, t).value - symmetric_loss(dn, t).value) / 2e-6;
        EXPECT_NEAR(grad[i], num, 1e-8);
    }
}

TEST(Erosion, AccuracyIsNonIncreasingInK) {
    for (const auto& spec : {ShapeSpec{ShapeKind::cuboid, 2, 1.3, 20000, 0}, ShapeSpec{ShapeKind::ellipsoid, 2.5, 1, 15000, 0}}) {
        const auto target = errera_axis_rule(generate_shape(spec)).pattern;
        double prev = 1.0;
        for (int k = 0; k <= 6; ++k) {
            const auto shifted = shift_plane_by_erosion(target, k, 1);
            const double acc = symmetric_accuracy(logits_for(shifted.grid(), 5.0f), target.grid()).value;
            EXPECT_LE(acc, prev);
            if (k == 0) EXPECT_EQ(acc, 1.0);
            prev = acc;
        }
    }
}

TEST(EvalRecord, CsvRow) {
    const auto t = half_box(4, 2, 2);
    const auto rec = evaluate_logits("c7", logits_for(swap_labels(t), 20.0f), t);
    EXPECT_EQ(rec.accuracy, 1.0);
    EXPECT_DOUBLE_EQ(rec.volume_ratio, 0.5);
    EXPECT_EQ(rec.permutation, Permutation::swapped);
    std::ostringstream os;
    os << kEvalCsvHeader << '\n';
    write_csv_row(os, {"c7", 0.75, 0.5, 0.25, Permutation::identity});
    EXPECT_EQ(os.str(), "cell_id,accuracy,loss,volume_ratio,permutation\nc7,0.75,0.5,0.25,identity\n");
}
