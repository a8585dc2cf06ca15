#pragma once

// Dataset manifests: (mother, target) VXG pairs with annotations and a
// train/val/test split, stored as JSON next to the voxel files.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "celldiv/division_rules.hpp"
#include "celldiv/shapes.hpp"
#include "celldiv/vxg.hpp"

namespace celldiv::pipeline {

namespace fs = std::filesystem;

enum class Split { train, val, test };

inline const char* to_string(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "train";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    fail(ErrorKind::invalid_argument, "unknown split '" + s + "'");
}

struct ManifestEntry {
    std::string id;
    std::string mother; // relative to the manifest directory
    std::string target;
    std::string tag;    // generation / domain annotation, e.g. "cuboid"
    std::string rule;
    ShapeSpec spec;
    Split split = Split::train;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::vector<ManifestEntry> entries;
    fs::path root; // directory the entry paths are relative to (not serialized)

    std::vector<const ManifestEntry*> split(Split s) const {
        std::vector<const ManifestEntry*> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(&e);
        return out;
    }
    std::size_t count(Split s) const { return split(s).size(); }
};

inline constexpr const char* kManifestFormat = "celldiv-manifest/1";

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["format"] = kManifestFormat;
    j["seed"] = m.seed;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : m.entries) {
        nlohmann::ordered_json o;
        o["id"] = e.id;
        o["mother"] = e.mother;
        o["target"] = e.target;
        o["tag"] = e.tag;
        o["rule"] = e.rule;
        o["spec"] = {{"kind", to_string(e.spec.kind)}, {"e", e.spec.e}, {"f", e.spec.f}, {"v", e.spec.v}, {"seed", e.spec.seed}};
        o["split"] = to_string(e.split);
        arr.push_back(o);
    }
    j["entries"] = arr;
    return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
    try {
        if (j.at("format").get<std::string>() != kManifestFormat) fail(ErrorKind::version_mismatch, "unsupported manifest format");
        DatasetManifest m;
        m.root = root;
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& o : j.at("entries")) {
            ManifestEntry e;
            e.id = o.at("id").get<std::string>();
            e.mother = o.at("mother").get<std::string>();
            e.target = o.at("target").get<std::string>();
            e.tag = o.value("tag", "");
            e.rule = o.value("rule", "");
            if (o.contains("spec")) {
                const auto& s = o["spec"];
                e.spec.kind = shape_kind_from_string(s.at("kind").get<std::string>());
                e.spec.e = s.at("e").get<double>();
                e.spec.f = s.at("f").get<double>();
                e.spec.v = s.at("v").get<double>();
                e.spec.seed = s.at("seed").get<std::uint64_t>();
            }
            e.split = split_from_string(o.at("split").get<std::string>());
            m.entries.push_back(std::move(e));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad manifest: ") + e.what());
    }
}

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::trunc);
    if (!os) fail(ErrorKind::io, "cannot write " + path.string());
    os << to_json(m).dump(1) << '\n';
}

inline DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorKind::io, "cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_file, std::string("bad manifest: ") + e.what());
    }
    return manifest_from_json(j, path.parent_path());
}

/// A loaded (mother, target) pair.
struct Sample {
    std::string id;
    LabelGrid mother;
    LabelGrid target;
    ShapeSpec spec;
    std::string tag;
};

inline Sample load_sample(const DatasetManifest& m, const ManifestEntry& e) {
    Sample s;
    s.id = e.id;
    s.mother = read_vxg(m.root / e.mother).grid;
    s.target = read_vxg(m.root / e.target).grid;
    s.spec = e.spec;
    s.tag = e.tag;
    if (s.mother.dims() != s.target.dims() || !(binarize(s.target) == binarize(s.mother)))
        fail(ErrorKind::corrupt_file, "target of " + e.id + " does not partition its mother");
    DivisionPattern::validate(s.target);
    return s;
}

inline std::vector<Sample> load_split(const DatasetManifest& m, Split split) {
    std::vector<Sample> out;
    for (const auto* e : m.split(split)) out.push_back(load_sample(m, *e));
    return out;
}

inline std::vector<Sample> load_all(const DatasetManifest& m) {
    std::vector<Sample> out;
    for (const auto& e : m.entries) out.push_back(load_sample(m, e));
    return out;
}

/// Validation and test get floor(n/10) each (at least 1 once n >= 3), training the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n) {
    std::size_t held = n / 10;
    if (held == 0 && n >= 3) held = 1;
    return {n - 2 * held, held, held};
}

/// Seeded split assignment. Items are shuffled within each tag and the tags
/// interleaved before dealing val, test, train in that order, so every split
/// keeps the tag mix.
inline std::vector<Split> assign_splits(const std::vector<std::string>& tags, std::uint64_t seed) {
    const std::size_t n = tags.size();
    std::vector<std::string> order_tags;
    for (const auto& t : tags)
        if (std::find(order_tags.begin(), order_tags.end(), t) == order_tags.end()) order_tags.push_back(t);
    std::mt19937_64 rng(derive_seed(seed, 0x5b117));
    std::vector<std::vector<std::size_t>> groups(order_tags.size());
    for (std::size_t i = 0; i < n; ++i)
        groups[std::size_t(std::find(order_tags.begin(), order_tags.end(), tags[i]) - order_tags.begin())].push_back(i);
    for (auto& g : groups) std::shuffle(g.begin(), g.end(), rng);
    std::vector<std::size_t> interleaved;
    for (std::size_t k = 0; interleaved.size() < n; ++k)
        for (const auto& g : groups)
            if (k < g.size()) interleaved.push_back(g[k]);
    const auto sizes = split_sizes(n);
    std::vector<Split> out(n, Split::train);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = interleaved[k];
        out[i] = k < sizes[1] ? Split::val : (k < sizes[1] + sizes[2] ? Split::test : Split::train);
    }
    return out;
}

struct GenerateOptions {
    std::vector<ShapeKind> kinds{ShapeKind::cuboid};
    RuleKind rule = RuleKind::errera;
    std::size_t n = 500;
    std::uint64_t seed = 0;
    SamplingRanges ranges{};
    MetropolisParams metropolis{};
    int margin = 2;
};

struct DivisionOutcome {
    DivisionPattern pattern;
    double energy = 0;
};

/// Applies a division rule to a mother mask.
inline DivisionOutcome divide_cell(const LabelGrid& mother, RuleKind rule, std::uint64_t seed,
                                   const MetropolisParams& mp = {}) {
    switch (rule) {
    case RuleKind::errera: {
        auto r = errera_axis_rule(mother);
        return {r.pattern, double(interface_area(r.pattern, false).count)};
    }
    case RuleKind::anti_hertwig: {
        auto r = anti_hertwig_rule(mother);
        return {r.pattern, double(interface_area(r.pattern, false).count)};
    }
    case RuleKind::metropolis: {
        MetropolisParams p = mp;
        p.seed = seed;
        auto r = metropolis_partition(mother, p);
        return {r.pattern, r.energy};
    }
    }
    fail(ErrorKind::invalid_argument, "unknown rule");
}

/// Generates shapes and their divisions under `root`, writes the VXG files and
/// returns the manifest (also saved as root/manifest.json).
inline DatasetManifest build_synthetic_dataset(const GenerateOptions& opt, const fs::path& root) {
    if (opt.kinds.empty()) fail(ErrorKind::invalid_argument, "at least one shape kind is required");
    if (opt.n < 1) fail(ErrorKind::invalid_argument, "dataset size must be >= 1");
    std::vector<ShapeSpec> specs;
    const std::size_t nk = opt.kinds.size();
    std::vector<std::vector<ShapeSpec>> per_kind;
    for (std::size_t k = 0; k < nk; ++k) {
        const std::size_t count = opt.n / nk + (k < opt.n % nk ? 1 : 0);
        per_kind.push_back(count ? sample_dataset(opt.kinds[k], count, derive_seed(opt.seed, 1000 + k), opt.ranges)
                                 : std::vector<ShapeSpec>{});
    }
    for (std::size_t i = 0; specs.size() < opt.n; ++i)
        for (const auto& g : per_kind)
            if (i < g.size()) specs.push_back(g[i]);

    DatasetManifest m;
    m.seed = opt.seed;
    m.root = root;
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto& spec = specs[i];
        char id[32];
        std::snprintf(id, sizeof id, "cell%04zu", i);
        LabelGrid mother = generate_shape(spec, opt.margin);
        auto div = divide_cell(mother, opt.rule, derive_seed(spec.seed, 77), opt.metropolis);
        ManifestEntry e;
        e.id = id;
        e.mother = std::string("cells/") + id + "_mother.vxg";
        e.target = std::string("cells/") + id + "_target.vxg";
        e.tag = to_string(spec.kind);
        e.rule = to_string(opt.rule);
        e.spec = spec;
        write_vxg(root / e.mother, mother, VxgKind::mask);
        write_vxg(root / e.target, div.pattern.grid(), VxgKind::division);
        tags.push_back(e.tag);
        m.entries.push_back(std::move(e));
    }
    const auto splits = assign_splits(tags, opt.seed);
    for (std::size_t i = 0; i < m.entries.size(); ++i) m.entries[i].split = splits[i];
    save_manifest(m, root / "manifest.json");
    return m;
}

} // namespace celldiv::pipeline
