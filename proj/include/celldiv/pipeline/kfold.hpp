#pragma once

#include <cmath>

#include "celldiv/pipeline/evaluate.hpp"
#include "celldiv/pipeline/train.hpp"

namespace celldiv::pipeline {

/// Seeded partition of n items into k folds whose sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> kfold_assignment(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) fail(ErrorKind::invalid_argument, "k-fold needs k >= 2");
    if (n < std::size_t(k)) fail(ErrorKind::invalid_argument, "k-fold needs at least k samples");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::mt19937_64 rng(derive_seed(seed, 0xf01d));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t at = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = n / std::size_t(k) + (std::size_t(f) < n % std::size_t(k) ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) folds[std::size_t(f)].push_back(order[at++]);
        std::sort(folds[std::size_t(f)].begin(), folds[std::size_t(f)].end());
    }
    return folds;
}

struct FoldResult {
    int fold = 0;
    nn::MaskedUNet<float> model;
    std::vector<LogRow> log;
    std::vector<EvalRecord> records; // predictions on the fold's test part
    double mean_accuracy = 0;
};

struct KFoldResult {
    std::vector<std::vector<std::size_t>> folds;
    std::vector<FoldResult> results;
    double mean_accuracy = 0;
    double accuracy_std = 0; // across per-fold means
};

/// Fold i is tested on part i, validated on part i+1 (mod k) and trained on the rest.
inline KFoldResult kfold(const std::vector<Sample>& samples, int k, const TrainConfig& cfg,
                         const std::function<void(int fold, const LogRow&)>& progress = {}) {
    KFoldResult out;
    out.folds = kfold_assignment(samples.size(), k, cfg.seed);
    std::vector<double> means;
    for (int f = 0; f < k; ++f) {
        std::vector<Sample> tr, va, te;
        for (int g = 0; g < k; ++g) {
            auto& dst = g == f ? te : (g == (f + 1) % k ? va : tr);
            for (auto i : out.folds[std::size_t(g)]) dst.push_back(samples[i]);
        }
        TrainConfig c = cfg;
        c.seed = derive_seed(cfg.seed, 100 + std::uint64_t(f));
        auto r = train(tr, va, c, [&](const LogRow& row) {
            if (progress) progress(f, row);
        });
        FoldResult fr{f, r.best, r.log, {}, 0};
        const auto rep = evaluate(te, model_predictor(fr.model), EvalOptions{});
        fr.records = rep.records;
        fr.mean_accuracy = summarize(rep).mean_accuracy;
        means.push_back(fr.mean_accuracy);
        out.results.push_back(std::move(fr));
    }
    out.mean_accuracy = mean_of(means);
    double var = 0;
    for (double m : means) var += (m - out.mean_accuracy) * (m - out.mean_accuracy);
    out.accuracy_std = std::sqrt(var / double(means.size()));
    return out;
}

inline void write_kfold_table(std::ostream& os, const KFoldResult& r) {
    const auto prec = os.precision(9);
    os << "fold,test_cells,mean_accuracy\n";
    for (const auto& f : r.results) os << f.fold << ',' << f.records.size() << ',' << f.mean_accuracy << '\n';
    os << "mean,," << r.mean_accuracy << "\nstd,," << r.accuracy_std << '\n';
    os.precision(prec);
}

inline void write_pooled_predictions(std::ostream& os, const KFoldResult& r) {
    const auto prec = os.precision(9);
    os << "fold," << kEvalCsvHeader << '\n';
    for (const auto& f : r.results)
        for (const auto& rec : f.records) {
            os << f.fold << ',';
            write_csv_row(os, rec);
        }
    os.precision(prec);
}

} // namespace celldiv::pipeline
