#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>

#include "celldiv/nn/adam.hpp"
#include "celldiv/nn/checkpoint.hpp"
#include "celldiv/objectives.hpp"
#include "celldiv/pipeline/batch.hpp"

namespace celldiv::pipeline {

struct TrainConfig {
    nn::UNetConfig model{};
    int batch = 16;
    double lr = 1e-4;
    int steps = 15000;
    bool augment = false;
    bool phase_jitter = true; // random low-side shift below 2^(depth-1) so every pooling phase is seen
    int val_interval = 100;
    std::uint64_t seed = 0;
    bool deterministic = false;
    int plateau_window = 500;
    double plateau_tolerance = 0.02; // max |validation-loss change| over the window
};

inline void validate(const TrainConfig& c) {
    nn::validate(c.model);
    if (c.batch < 1) fail(ErrorKind::invalid_argument, "batch size must be >= 1");
    if (c.steps < 1) fail(ErrorKind::invalid_argument, "steps must be >= 1");
    if (c.val_interval < 1) fail(ErrorKind::invalid_argument, "validation interval must be >= 1");
    if (!(c.lr > 0.0)) fail(ErrorKind::invalid_argument, "learning rate must be > 0");
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = nn::config_to_json(c.model);
    j["batch"] = c.batch;
    j["lr"] = c.lr;
    j["steps"] = c.steps;
    j["augment"] = c.augment;
    j["phase_jitter"] = c.phase_jitter;
    j["val_interval"] = c.val_interval;
    j["seed"] = c.seed;
    return j;
}

struct LogRow {
    int step = 0;
    double train_loss = 0; // mean batch loss since the previous row
    double val_loss = 0;   // NaN without a validation split
    double wall_time = 0;  // seconds; 0 in deterministic mode
};

inline constexpr const char* kTrainLogHeader = "step,train_loss,val_loss,wall_time";

inline void write_log_row(std::ostream& os, const LogRow& r) {
    os << r.step << ',' << r.train_loss << ',';
    if (std::isfinite(r.val_loss)) os << r.val_loss;
    os << ',' << r.wall_time << '\n';
}

inline void write_training_log(std::ostream& os, const std::vector<LogRow>& rows) {
    const auto prec = os.precision(9);
    os << kTrainLogHeader << '\n';
    for (const auto& r : rows) write_log_row(os, r);
    os.precision(prec);
}

struct TrainResult {
    nn::MaskedUNet<float> best;
    nn::MaskedUNet<float> last;
    int best_step = 0;
    double best_loss = 0;
    std::vector<LogRow> log;
    double plateau_slope = 0; // validation loss per step over the last window
    bool plateaued = false;
};

/// Mean symmetric loss over samples, one unpadded forward pass each.
inline double mean_symmetric_loss(const nn::MaskedUNet<float>& model, const std::vector<Sample>& samples) {
    double sum = 0;
    for (const auto& s : samples) sum += symmetric_loss(nn::unet_forward(s.mother, model), s.target).value;
    return samples.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / double(samples.size());
}

/// Least-squares slope of val_loss against step for rows within the last `window` steps.
inline double log_slope(const std::vector<LogRow>& rows, int window) {
    if (rows.empty()) return 0;
    const int last = rows.back().step;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (const auto& r : rows)
        if (r.step >= last - window && std::isfinite(r.val_loss)) {
            sx += r.step;
            sy += r.val_loss;
            sxx += double(r.step) * r.step;
            sxy += double(r.step) * r.val_loss;
            n += 1;
        }
    const double den = n * sxx - sx * sx;
    return n < 2 || den == 0 ? 0 : (n * sxy - sx * sy) / den;
}

/// Symmetric-loss training with Adam; keeps the parameters with the best validation loss.
inline TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg,
                         const std::function<void(const LogRow&)>& progress = {}) {
    validate(cfg);
    if (train_set.empty()) fail(ErrorKind::invalid_argument, "training split is empty");
    const auto t0 = std::chrono::steady_clock::now();
    const int align = 1 << (cfg.model.depth - 1);
    nn::MaskedUNet<float> model(cfg.model, derive_seed(cfg.seed, 1));
    nn::AdamState adam;
    adam.lr = cfg.lr;
    std::mt19937_64 rng(derive_seed(cfg.seed, 2));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    TrainResult res{model, model, 0, std::numeric_limits<double>::infinity(), {}, 0, false};
    double interval_sum = 0;
    int interval_count = 0;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<Sample> augmented;
        std::vector<const Sample*> batch;
        augmented.reserve(std::size_t(cfg.batch));
        for (int k = 0; k < cfg.batch; ++k) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const Sample& s = train_set[order[cursor++]];
            const std::uint64_t item = 1000003ull * std::uint64_t(step) + std::uint64_t(k);
            if (!cfg.augment && !cfg.phase_jitter) {
                batch.push_back(&s);
                continue;
            }
            Sample w = cfg.augment ? augment(s, derive_seed(cfg.seed, item)) : s;
            if (cfg.phase_jitter) w = shift_phase(w, align, derive_seed(derive_seed(cfg.seed, 3), item));
            augmented.push_back(std::move(w));
            batch.push_back(&augmented.back());
        }
        const Batch b = collate_batch(batch, align);
        model.zero_grad();
        const float scale = 1.0f / float(cfg.batch);
        const auto losses = model.forward_backward(b.input, b.mask, [&](int i, const nn::Tensor<float>& logits, nn::Tensor<float>& g) {
            const double l = symmetric_loss_grad(logits, b.targets[std::size_t(i)], g).value;
            for (auto& v : g.values()) v *= scale;
            return l;
        });
        const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size());
        if (!std::isfinite(loss))
            fail(ErrorKind::numeric_failure, "training loss diverged (non-finite) at step " + std::to_string(step));
        nn::adam_step(model.params(), adam);
        interval_sum += loss;
        ++interval_count;

        if (step == 1 || step % cfg.val_interval == 0 || step == cfg.steps) {
            LogRow row;
            row.step = step;
            row.train_loss = interval_sum / interval_count;
            row.val_loss = mean_symmetric_loss(model, val_set);
            if (!cfg.deterministic)
                row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double score = val_set.empty() ? row.train_loss : row.val_loss;
            if (!std::isfinite(score)) fail(ErrorKind::numeric_failure, "validation loss is non-finite at step " + std::to_string(step));
            if (score < res.best_loss) {
                res.best_loss = score;
                res.best_step = step;
                res.best = model;
            }
            res.log.push_back(row);
            if (progress) progress(row);
            interval_sum = 0;
            interval_count = 0;
        }
    }
    res.last = model;
    res.plateau_slope = log_slope(res.log, cfg.plateau_window);
    res.plateaued = std::abs(res.plateau_slope) * cfg.plateau_window <= cfg.plateau_tolerance;
    return res;
}

inline nlohmann::json checkpoint_metadata(const TrainConfig& cfg, const TrainResult& r) {
    nlohmann::ordered_json j;
    j["train"] = to_json(cfg);
    j["best_step"] = r.best_step;
    j["best_loss"] = r.best_loss;
    j["plateau_slope"] = r.plateau_slope;
    j["plateaued"] = r.plateaued;
    return j;
}

} // namespace celldiv::pipeline
