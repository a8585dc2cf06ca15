#pragma once

// Per-cell evaluation and the sensitivity experiments: random padding, random
// rotation, erosion baseline, prediction volume ratios, accuracy vs elongation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "celldiv/descriptors.hpp"
#include "celldiv/objectives.hpp"
#include "celldiv/nn/unet.hpp"
#include "celldiv/pipeline/batch.hpp"

namespace celldiv::pipeline {

/// Logits (1, 2, dims of mother) for a mother mask. The target is passed for
/// oracle predictors and must not be used by models.
using Predictor = std::function<nn::Tensor<float>(const LabelGrid& mother, const LabelGrid& target)>;

inline Predictor model_predictor(const nn::MaskedUNet<float>& model) {
    return [&model](const LabelGrid& mother, const LabelGrid&) { return nn::unet_forward(mother, model); };
}

/// Returns saturated logits that reproduce the target exactly.
inline Predictor oracle_predictor() {
    return [](const LabelGrid& mother, const LabelGrid& target) {
        const auto& d = mother.dims();
        nn::Tensor<float> t(nn::Shape5{1, 2, d.nx, d.ny, d.nz});
        const std::size_t n = mother.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (target[i] == 0) continue;
            t[i] = target[i] == 1 ? 20.0f : -20.0f;
            t[n + i] = -t[i];
        }
        return t;
    };
}

/// Symmetric accuracy of a predicted labeling against a target over the target's cell.
inline double pattern_accuracy(const LabelGrid& predicted, const LabelGrid& target) {
    if (predicted.dims() != target.dims()) fail(ErrorKind::shape_mismatch, "prediction and target dims differ");
    std::size_t same = 0, n = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0) continue;
        ++n;
        same += predicted[i] == target[i];
    }
    if (n == 0) fail(ErrorKind::empty_mask, "target has no in-mask voxels");
    return double(std::max(same, n - same)) / double(n);
}

enum class Experiment { records, padding, rotation, erosion, volume, elongation };

inline const char* to_string(Experiment e) {
    switch (e) {
    case Experiment::records: return "records";
    case Experiment::padding: return "padding";
    case Experiment::rotation: return "rotation";
    case Experiment::erosion: return "erosion";
    case Experiment::volume: return "volume";
    case Experiment::elongation: return "elongation";
    }
    return "records";
}

inline Experiment experiment_from_string(const std::string& s) {
    for (auto e : {Experiment::records, Experiment::padding, Experiment::rotation, Experiment::erosion, Experiment::volume,
                   Experiment::elongation})
        if (s == to_string(e)) return e;
    fail(ErrorKind::invalid_argument, "unknown experiment '" + s + "'");
}

struct EvalOptions {
    std::set<Experiment> experiments{Experiment::records};
    std::uint64_t seed = 0;
    int max_padding = 8;  // per face, uniform in [0, max_padding]
    int erosion_max_k = 6;
    AccuracyMode accuracy_mode = AccuracyMode::max;
    double ambiguity_elongation = 1.1;
};

struct PaddingRow {
    std::string cell_id;
    std::array<int, 6> pads{}; // -x +x -y +y -z +z
    double accuracy = 0, padded_accuracy = 0;
};
struct RotationRow {
    std::string cell_id;
    double accuracy = 0, rotated_accuracy = 0;
};
struct ErosionRow {
    std::string cell_id;
    int k = 0;
    std::size_t reassigned = 0;
    std::size_t volume = 0;
    double accuracy = 0;
};
struct VolumeRow {
    std::string cell_id;
    double target_ratio = 0, predicted_ratio = 0;
};
struct ElongationRow {
    std::string cell_id;
    double elongation = 0, flatness = 0, accuracy = 0;
    bool ambiguous = false;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    std::vector<PaddingRow> padding;
    std::vector<RotationRow> rotation;
    std::vector<ErosionRow> erosion;
    std::vector<VolumeRow> volume;
    std::vector<ElongationRow> elongation;
};

/// Erosion baseline: accuracy of the target with its plane shifted by k voxels, k = 0..max_k.
inline std::vector<ErosionRow> erosion_curve(const std::string& id, const DivisionPattern& target, int max_k, int side = 1) {
    std::vector<ErosionRow> rows;
    const std::size_t volume = target.grid().foreground_count();
    for (int k = 0; k <= max_k; ++k) {
        LabelGrid shifted;
        try {
            shifted = shift_plane_by_erosion(target, k, side).grid();
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::degenerate_pattern) break;
            throw;
        }
        std::size_t moved = 0;
        for (std::size_t i = 0; i < shifted.size(); ++i) moved += shifted[i] != target.grid()[i];
        rows.push_back({id, k, moved, volume, pattern_accuracy(shifted, target.grid())});
    }
    return rows;
}

inline EvalReport evaluate(const std::vector<Sample>& samples, const Predictor& predict, const EvalOptions& opt) {
    EvalReport rep;
    auto has = [&](Experiment e) { return opt.experiments.count(e) > 0; };
    for (std::size_t idx = 0; idx < samples.size(); ++idx) {
        const Sample& s = samples[idx];
        const auto logits = predict(s.mother, s.target);
        const EvalRecord rec = evaluate_logits(s.id, logits, s.target, opt.accuracy_mode);
        if (has(Experiment::records)) rep.records.push_back(rec);
        if (has(Experiment::padding)) {
            std::mt19937_64 rng(derive_seed(opt.seed, 2 * idx));
            std::uniform_int_distribution<int> u(0, opt.max_padding);
            PaddingRow row{s.id, {}, rec.accuracy, 0};
            for (auto& p : row.pads) p = u(rng);
            const Margins m{{row.pads[0], row.pads[2], row.pads[4]}, {row.pads[1], row.pads[3], row.pads[5]}};
            const LabelGrid pm = pad(s.mother, m), pt = pad(s.target, m);
            row.padded_accuracy = symmetric_accuracy(predict(pm, pt), pt, opt.accuracy_mode).value;
            rep.padding.push_back(row);
        }
        if (has(Experiment::rotation)) {
            const Sample r = augment(s, derive_seed(opt.seed, 2 * idx + 1));
            rep.rotation.push_back(
                {s.id, rec.accuracy, symmetric_accuracy(predict(r.mother, r.target), r.target, opt.accuracy_mode).value});
        }
        if (has(Experiment::erosion)) {
            auto rows = erosion_curve(s.id, DivisionPattern(s.target), opt.erosion_max_k);
            rep.erosion.insert(rep.erosion.end(), rows.begin(), rows.end());
        }
        if (has(Experiment::volume)) rep.volume.push_back({s.id, volume_ratio(s.target), rec.volume_ratio});
        if (has(Experiment::elongation)) {
            const auto d = shape_descriptors(s.mother);
            rep.elongation.push_back({s.id, d.elongation, d.flatness, rec.accuracy, d.elongation < opt.ambiguity_elongation});
        }
    }
    return rep;
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct EvalSummary {
    std::size_t cells = 0;
    double mean_accuracy = 0, median_accuracy = 0;
    double mean_abs_padding_delta = 0, max_abs_padding_delta = 0;
    double mean_rotation_drop = 0;
};

inline EvalSummary summarize(const EvalReport& r) {
    EvalSummary s;
    std::vector<double> acc, pad_d, rot_d;
    for (const auto& x : r.records) acc.push_back(x.accuracy);
    for (const auto& x : r.padding) pad_d.push_back(std::abs(x.padded_accuracy - x.accuracy));
    for (const auto& x : r.rotation) rot_d.push_back(x.accuracy - x.rotated_accuracy);
    s.cells = r.records.size();
    s.mean_accuracy = mean_of(acc);
    s.median_accuracy = median_of(acc);
    s.mean_abs_padding_delta = mean_of(pad_d);
    s.max_abs_padding_delta = pad_d.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::max_element(pad_d.begin(), pad_d.end());
    s.mean_rotation_drop = mean_of(rot_d);
    return s;
}

/// Writes one CSV per experiment that ran, plus summary.csv.
inline void write_reports(const EvalReport& r, const fs::path& dir) {
    fs::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream os(dir / name, std::ios::trunc);
        if (!os) fail(ErrorKind::io, "cannot write report " + (dir / name).string());
        os.precision(9);
        return os;
    };
    if (!r.records.empty()) {
        auto os = open("records.csv");
        os << kEvalCsvHeader << '\n';
        for (const auto& x : r.records) write_csv_row(os, x);
    }
    if (!r.padding.empty()) {
        auto os = open("padding.csv");
        os << "cell_id,pad_x_lo,pad_x_hi,pad_y_lo,pad_y_hi,pad_z_lo,pad_z_hi,accuracy,padded_accuracy,delta\n";
        for (const auto& x : r.padding) {
            os << x.cell_id;
            for (int p : x.pads) os << ',' << p;
            os << ',' << x.accuracy << ',' << x.padded_accuracy << ',' << x.padded_accuracy - x.accuracy << '\n';
        }
    }
    if (!r.rotation.empty()) {
        auto os = open("rotation.csv");
        os << "cell_id,accuracy,rotated_accuracy,delta\n";
        for (const auto& x : r.rotation)
            os << x.cell_id << ',' << x.accuracy << ',' << x.rotated_accuracy << ',' << x.rotated_accuracy - x.accuracy << '\n';
    }
    if (!r.erosion.empty()) {
        auto os = open("erosion.csv");
        os << "cell_id,k,reassigned,volume,accuracy\n";
        for (const auto& x : r.erosion)
            os << x.cell_id << ',' << x.k << ',' << x.reassigned << ',' << x.volume << ',' << x.accuracy << '\n';
    }
    if (!r.volume.empty()) {
        auto os = open("volume_ratio.csv");
        os << "cell_id,target_ratio,predicted_ratio\n";
        for (const auto& x : r.volume) os << x.cell_id << ',' << x.target_ratio << ',' << x.predicted_ratio << '\n';
    }
    if (!r.elongation.empty()) {
        auto os = open("elongation.csv");
        os << "cell_id,elongation,flatness,accuracy,ambiguous\n";
        for (const auto& x : r.elongation)
            os << x.cell_id << ',' << x.elongation << ',' << x.flatness << ',' << x.accuracy << ',' << (x.ambiguous ? 1 : 0) << '\n';
    }
    const auto s = summarize(r);
    auto os = open("summary.csv");
    os << "metric,value\n";
    os << "cells," << s.cells << '\n';
    if (!r.records.empty()) os << "mean_accuracy," << s.mean_accuracy << "\nmedian_accuracy," << s.median_accuracy << '\n';
    if (!r.padding.empty())
        os << "mean_abs_padding_delta," << s.mean_abs_padding_delta << "\nmax_abs_padding_delta," << s.max_abs_padding_delta << '\n';
    if (!r.rotation.empty()) os << "mean_rotation_drop," << s.mean_rotation_drop << '\n';
}

} // namespace celldiv::pipeline
