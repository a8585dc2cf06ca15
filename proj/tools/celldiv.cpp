// celldiv: synthetic cell-division datasets, masked-UNet training and evaluation.
//
// Exit codes: 0 success, 2 invalid input (flags, files, degenerate shapes),
// 3 numeric failure (divergence, degenerate prediction).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "celldiv/export.hpp"
#include "celldiv/nn/checkpoint.hpp"
#include "celldiv/pipeline/kfold.hpp"
#include "celldiv/pipeline/standardize.hpp"
#include "celldiv/pipeline/workspace.hpp"

namespace fs = std::filesystem;
using namespace celldiv;
using namespace celldiv::pipeline;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::string workspace;
    int threads = 1;
    bool deterministic = false;
    std::uint64_t seed = 0;

    Workspace ws() const { return open_workspace(workspace_root(workspace)); }
    fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : workspace_root(workspace) / p; }
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--workspace", c.workspace, "Workspace root (default: $CELLDIV_WORKSPACE or the current directory)");
    app->add_option("--threads", c.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
    app->add_flag("--deterministic", c.deterministic, "Reproducible mode (fixed reduction order, no wall-clock values in outputs)");
    app->add_option("--seed", c.seed, "Master seed");
}

struct TrainFlags {
    std::string manifest = "manifest.json";
    int depth = 3;
    int base_channels = 8;
    int convs_per_level = 2;
    int steps = 2000;
    int batch = 16;
    double lr = 1e-4;
    bool augment = false;
    bool no_phase_jitter = false;
    int val_interval = 100;
};

void add_train_flags(CLI::App* app, TrainFlags& t) {
    app->add_option("--manifest", t.manifest, "Dataset manifest");
    app->add_option("--depth", t.depth, "UNet levels")->check(CLI::Range(2, 8));
    app->add_option("--base-channels", t.base_channels, "Channels at the first level")->check(CLI::PositiveNumber);
    app->add_option("--convs-per-level", t.convs_per_level, "3x3x3 convolutions per level")->check(CLI::PositiveNumber);
    app->add_option("--steps", t.steps, "Optimization steps")->check(CLI::PositiveNumber);
    app->add_option("--batch", t.batch, "Batch size")->check(CLI::PositiveNumber);
    app->add_option("--lr", t.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    app->add_flag("--augment", t.augment, "Random rotations during training");
    app->add_flag("--no-phase-jitter", t.no_phase_jitter, "Keep every cell at the same pooling-grid phase");
    app->add_option("--val-interval", t.val_interval, "Steps between validation passes")->check(CLI::PositiveNumber);
}

TrainConfig train_config(const TrainFlags& t, const Common& c) {
    TrainConfig cfg;
    cfg.model.depth = t.depth;
    cfg.model.base_channels = t.base_channels;
    cfg.model.convs_per_level = t.convs_per_level;
    cfg.steps = t.steps;
    cfg.batch = t.batch;
    cfg.lr = t.lr;
    cfg.augment = t.augment;
    cfg.phase_jitter = !t.no_phase_jitter;
    cfg.val_interval = t.val_interval;
    cfg.seed = c.seed;
    cfg.deterministic = c.deterministic;
    return cfg;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::trunc);
    if (!os) fail(ErrorKind::io, "cannot write " + p.string());
    os.precision(9);
    return os;
}

int run_generate(const Common& c, const std::string& kind, const std::string& rule, std::size_t n, const std::string& out,
                 const SamplingRanges& ranges, double target_ratio, int sweeps) {
    GenerateOptions opt;
    if (kind == "mixed")
        opt.kinds = {ShapeKind::cuboid, ShapeKind::ellipsoid};
    else
        opt.kinds = {shape_kind_from_string(kind)};
    opt.rule = rule_kind_from_string(rule);
    opt.n = n;
    opt.seed = c.seed;
    opt.ranges = ranges;
    opt.metropolis.target_ratio = target_ratio;
    opt.metropolis.sweeps = sweeps;
    const Workspace ws = open_workspace(out.empty() ? workspace_root(c.workspace) : c.resolve(out));
    const auto m = build_synthetic_dataset(opt, ws.root);
    auto os = open_out(ws.root / "dataset.csv");
    os << "id,split,kind,e,f,v,voxels,interface_faces,volume_ratio\n";
    for (const auto& e : m.entries) {
        const auto s = load_sample(m, e);
        os << e.id << ',' << to_string(e.split) << ',' << e.tag << ',' << e.spec.e << ',' << e.spec.f << ',' << e.spec.v << ','
           << s.mother.foreground_count() << ',' << interface_area(s.target, false).count << ',' << volume_ratio(s.target) << '\n';
    }
    std::cout << "generated " << m.entries.size() << " pairs: " << m.count(Split::train) << '/' << m.count(Split::val) << '/'
              << m.count(Split::test) << " (train/val/test) in " << ws.root.string() << '\n';
    return 0;
}

int run_divide(const Common& c, const std::string& in, const std::string& rule, const std::string& out, const std::string& csv,
               double target_ratio, int sweeps) {
    const auto file = read_vxg(c.resolve(in));
    const LabelGrid mother = binarize(file.grid);
    if (mother.foreground_count() == 0) fail(ErrorKind::empty_mask, "input mask is empty");
    MetropolisParams mp;
    mp.target_ratio = target_ratio;
    mp.sweeps = sweeps;
    const RuleKind r = rule_kind_from_string(rule);
    const auto div = divide_cell(mother, r, c.seed, mp);
    const fs::path out_path = c.resolve(out.empty() ? fs::path(in).stem().string() + "_division.vxg" : out);
    write_vxg(out_path, div.pattern.grid(), VxgKind::division);
    std::ostringstream row;
    row.precision(9);
    row << fs::path(in).stem().string() << ',' << to_string(r) << ',' << interface_area(div.pattern, false).count << ','
        << volume_ratio(div.pattern) << ',' << div.energy << ',' << c.seed << '\n';
    const char* header = "cell_id,rule,interface_faces,volume_ratio,energy,seed\n";
    std::cout << header << row.str();
    if (!csv.empty()) {
        const fs::path p = c.resolve(csv);
        const bool fresh = !fs::exists(p);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::app);
        if (!os) fail(ErrorKind::io, "cannot write " + p.string());
        if (fresh) os << header;
        os << row.str();
    }
    return 0;
}

int run_train(const Common& c, const TrainFlags& t, const std::string& out, const std::string& log) {
    const Workspace ws = c.ws();
    const auto m = load_manifest(ws.resolve(t.manifest));
    const TrainConfig cfg = train_config(t, c);
    const auto tr = load_split(m, Split::train), va = load_split(m, Split::val);
    const auto r = train(tr, va, cfg, [](const LogRow& row) {
        std::cerr << "step " << row.step << " train " << row.train_loss << " val " << row.val_loss << '\n';
    });
    const fs::path ckpt = out.empty() ? ws.checkpoints() / "model.munet" : ws.resolve(out);
    nn::save_checkpoint(ckpt, r.best, checkpoint_metadata(cfg, r));
    auto os = open_out(log.empty() ? ws.reports() / "train_log.csv" : ws.resolve(log));
    write_training_log(os, r.log);
    std::cout << "best step " << r.best_step << " loss " << r.best_loss << (r.plateaued ? " (plateaued)" : " (not plateaued)")
              << ", checkpoint " << ckpt.string() << '\n';
    return 0;
}

int run_kfold(const Common& c, const TrainFlags& t, int k, const std::string& out) {
    const Workspace ws = c.ws();
    const auto m = load_manifest(ws.resolve(t.manifest));
    const auto samples = load_all(m);
    const TrainConfig cfg = train_config(t, c);
    const auto r = kfold(samples, k, cfg, [](int f, const LogRow& row) {
        std::cerr << "fold " << f << " step " << row.step << " train " << row.train_loss << " val " << row.val_loss << '\n';
    });
    const fs::path dir = out.empty() ? ws.checkpoints() / "kfold" : ws.resolve(out);
    for (const auto& f : r.results) {
        nn::save_checkpoint(dir / ("fold" + std::to_string(f.fold) + ".munet"), f.model);
        auto os = open_out(dir / ("fold" + std::to_string(f.fold) + "_log.csv"));
        write_training_log(os, f.log);
    }
    {
        auto os = open_out(dir / "kfold.csv");
        write_kfold_table(os, r);
    }
    auto os = open_out(dir / "pooled_predictions.csv");
    write_pooled_predictions(os, r);
    std::cout << "k-fold mean accuracy " << r.mean_accuracy << " (std " << r.accuracy_std << ")\n";
    return 0;
}

std::vector<Sample> load_part(const DatasetManifest& m, const std::string& part) {
    return part == "all" ? load_all(m) : load_split(m, split_from_string(part));
}

int run_evaluate(const Common& c, const std::string& checkpoint, bool oracle, const std::string& manifest, const std::string& part,
                 const std::vector<std::string>& experiments, const std::string& out, int max_padding, const std::string& mode) {
    const Workspace ws = c.ws();
    if (checkpoint.empty() && !oracle) fail(ErrorKind::invalid_argument, "evaluate needs --checkpoint or --oracle");
    const auto m = load_manifest(ws.resolve(manifest));
    const auto samples = load_part(m, part);
    EvalOptions opt;
    opt.experiments.clear();
    for (const auto& e : experiments) opt.experiments.insert(experiment_from_string(e));
    opt.experiments.insert(Experiment::records);
    opt.seed = c.seed;
    opt.max_padding = max_padding;
    if (mode == "loss-permutation")
        opt.accuracy_mode = AccuracyMode::loss_permutation;
    else if (mode != "max")
        fail(ErrorKind::invalid_argument, "accuracy mode must be max or loss-permutation");
    std::optional<nn::Checkpoint> ckpt;
    if (!oracle) ckpt = nn::load_checkpoint(ws.resolve(checkpoint));
    const auto rep = evaluate(samples, oracle ? oracle_predictor() : model_predictor(ckpt->model), opt);
    const fs::path dir = out.empty() ? ws.reports() : ws.resolve(out);
    write_reports(rep, dir);
    const auto s = summarize(rep);
    std::cout << "evaluated " << s.cells << " cells: mean accuracy " << s.mean_accuracy << ", median " << s.median_accuracy
              << "; reports in " << dir.string() << '\n';
    return 0;
}

int run_predict(const Common& c, const std::string& checkpoint, const std::string& in, const std::string& out) {
    const auto ckpt = nn::load_checkpoint(c.resolve(checkpoint));
    const LabelGrid mother = binarize(read_vxg(c.resolve(in)).grid);
    if (mother.foreground_count() == 0) fail(ErrorKind::empty_mask, "input mask is empty");
    const auto logits = nn::unet_forward(mother, ckpt.model);
    for (float v : logits.values())
        if (!std::isfinite(v)) fail(ErrorKind::numeric_failure, "non-finite logits");
    const LabelGrid pred = predict_labels(logits, mother);
    if (!DivisionPattern::is_valid(pred)) fail(ErrorKind::numeric_failure, "prediction assigns the whole cell to one daughter");
    write_vxg(c.resolve(out), pred, VxgKind::division);
    std::cout << "predicted volume ratio " << volume_ratio(pred) << ", interface " << interface_area(pred, false).count << " faces\n";
    return 0;
}

int run_export(const Common& c, const std::string& in, const std::string& out, const std::string& what, const std::string& csv) {
    const LabelGrid g = read_vxg(c.resolve(in)).grid;
    std::vector<std::pair<std::string, QuadMesh>> objects;
    if (what == "surface" || what == "both") objects.emplace_back("surface", surface_mesh(g));
    if (what == "interface" || what == "both") {
        objects.emplace_back("interface", interface_mesh(g));
        if (objects.back().second.face_count() == 0) std::cerr << "warning: empty interface, writing an empty mesh\n";
    }
    if (objects.empty()) fail(ErrorKind::invalid_argument, "--what must be surface, interface or both");
    auto os = open_out(c.resolve(out));
    write_obj(os, objects);
    if (!csv.empty()) {
        auto cs = open_out(c.resolve(csv));
        cs << "voxels,daughter1,daughter2,surface_faces,interface_faces,volume_ratio\n";
        cs << g.foreground_count() << ',' << g.count(1) << ',' << g.count(2) << ',' << surface_mesh(g).face_count() << ','
           << interface_area(g, false).count << ',' << volume_ratio(g) << '\n';
    }
    for (const auto& [name, mesh] : objects) std::cout << name << ": " << mesh.face_count() << " quads\n";
    return 0;
}

int run_standardize(const Common& c, const std::string& manifest, const std::string& out, double vt) {
    const Workspace ws = c.ws();
    const auto m = load_manifest(ws.resolve(manifest));
    const Workspace dst = open_workspace(c.resolve(out));
    const auto s = standardize_volume(m, dst.root, vt);
    std::cout << "standardized " << s.entries.size() << " pairs into " << dst.root.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic cell division datasets and masked-UNet division prediction"};
    app.require_subcommand(1);
    Common common;
    add_common(&app, common);

    auto* gen = app.add_subcommand("generate", "Generate mother cells and their divisions");
    std::string kind = "cuboid", rule = "errera", gen_out;
    std::size_t n = 500;
    SamplingRanges ranges;
    double target_ratio = 0.5;
    int sweeps = MetropolisParams{}.sweeps;
    add_common(gen, common);
    gen->add_option("--kind", kind, "cuboid, ellipsoid or mixed")->check(CLI::IsMember({"cuboid", "ellipsoid", "mixed"}));
    gen->add_option("--rule", rule, "errera, anti-hertwig or metropolis")->check(CLI::IsMember({"errera", "anti-hertwig", "metropolis"}));
    gen->add_option("--n", n, "Number of pairs")->check(CLI::PositiveNumber);
    gen->add_option("--out", gen_out, "Output directory (default: workspace root)");
    gen->add_option("--e-min", ranges.e_min);
    gen->add_option("--e-max", ranges.e_max);
    gen->add_option("--f-min", ranges.f_min);
    gen->add_option("--f-max", ranges.f_max);
    gen->add_option("--v-min", ranges.v_min);
    gen->add_option("--v-max", ranges.v_max);
    gen->add_option("--max-extent", ranges.max_extent, "Reject shapes longer than this (voxels, 0 = off)");
    gen->add_option("--target-ratio", target_ratio, "Metropolis target volume ratio");
    gen->add_option("--sweeps", sweeps, "Metropolis sweeps")->check(CLI::PositiveNumber);

    auto* div = app.add_subcommand("divide", "Divide one mother cell");
    std::string div_in, div_out, div_csv;
    add_common(div, common);
    div->add_option("--in", div_in, "Mother mask VXG")->required();
    div->add_option("--rule", rule, "errera, anti-hertwig or metropolis")->check(CLI::IsMember({"errera", "anti-hertwig", "metropolis"}));
    div->add_option("--out", div_out, "Division VXG");
    div->add_option("--csv", div_csv, "Append the stats row to this CSV");
    div->add_option("--target-ratio", target_ratio, "Metropolis target volume ratio");
    div->add_option("--sweeps", sweeps, "Metropolis sweeps")->check(CLI::PositiveNumber);

    auto* tr = app.add_subcommand("train", "Train a masked UNet");
    TrainFlags tflags;
    std::string tr_out, tr_log;
    add_common(tr, common);
    add_train_flags(tr, tflags);
    tr->add_option("--out", tr_out, "Checkpoint path (default: checkpoints/model.munet)");
    tr->add_option("--log", tr_log, "Training log CSV (default: reports/train_log.csv)");

    auto* kf = app.add_subcommand("kfold", "k-fold training and pooled test predictions");
    int k = 10;
    std::string kf_out;
    add_common(kf, common);
    add_train_flags(kf, tflags);
    kf->add_option("--k", k, "Number of folds");
    kf->add_option("--out", kf_out, "Output directory (default: checkpoints/kfold)");

    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint and run sensitivity experiments");
    std::string ev_ckpt, ev_manifest = "manifest.json", ev_split = "test", ev_out, ev_mode = "max";
    std::vector<std::string> experiments{"records", "padding", "rotation", "erosion", "volume", "elongation"};
    bool oracle = false;
    int max_padding = 8;
    add_common(ev, common);
    ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint");
    ev->add_flag("--oracle", oracle, "Use the targets as predictions (sanity baseline)");
    ev->add_option("--manifest", ev_manifest, "Dataset manifest");
    ev->add_option("--split", ev_split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
    ev->add_option("--experiments", experiments, "Comma-separated experiments")->delimiter(',');
    ev->add_option("--out", ev_out, "Report directory (default: reports)");
    ev->add_option("--max-padding", max_padding, "Random padding bound per face")->check(CLI::NonNegativeNumber);
    ev->add_option("--accuracy-mode", ev_mode, "max or loss-permutation");

    auto* pr = app.add_subcommand("predict", "Predict the division of one mother cell");
    std::string pr_ckpt, pr_in, pr_out;
    add_common(pr, common);
    pr->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required();
    pr->add_option("--in", pr_in, "Mother mask VXG")->required();
    pr->add_option("--out", pr_out, "Predicted division VXG")->required();

    auto* ex = app.add_subcommand("export", "Export voxel-face meshes as OBJ");
    std::string ex_in, ex_out, ex_what = "both", ex_csv;
    add_common(ex, common);
    ex->add_option("--in", ex_in, "Mask or division VXG")->required();
    ex->add_option("--out", ex_out, "OBJ path")->required();
    ex->add_option("--what", ex_what, "surface, interface or both");
    ex->add_option("--csv", ex_csv, "Summary CSV");

    auto* st = app.add_subcommand("standardize", "Rescale every cell of a manifest to a common volume");
    std::string st_manifest = "manifest.json", st_out;
    double vt = 0;
    add_common(st, common);
    st->add_option("--manifest", st_manifest, "Dataset manifest");
    st->add_option("--out", st_out, "Output workspace")->required();
    st->add_option("--target-volume", vt, "Target volume in voxels (default: mean training volume)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInvalid;
    }

    try {
        if (*gen) return run_generate(common, kind, rule, n, gen_out, ranges, target_ratio, sweeps);
        if (*div) return run_divide(common, div_in, rule, div_out, div_csv, target_ratio, sweeps);
        if (*tr) return run_train(common, tflags, tr_out, tr_log);
        if (*kf) return run_kfold(common, tflags, k, kf_out);
        if (*ev) return run_evaluate(common, ev_ckpt, oracle, ev_manifest, ev_split, experiments, ev_out, max_padding, ev_mode);
        if (*pr) return run_predict(common, pr_ckpt, pr_in, pr_out);
        if (*ex) return run_export(common, ex_in, ex_out, ex_what, ex_csv);
        if (*st) return run_standardize(common, st_manifest, st_out, vt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::numeric_failure ? kExitNumeric : kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
