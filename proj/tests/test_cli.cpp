#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "celldiv/nn/checkpoint.hpp"
#include "celldiv/objectives.hpp"
#include "celldiv/pipeline/dataset.hpp"
#include "celldiv/shapes.hpp"

using namespace celldiv;
using namespace celldiv::pipeline;

namespace {

const char* kSmall = " --e-min 1.5 --e-max 2.5 --f-min 1 --f-max 1.5 --v-min 1500 --v-max 3000 --max-extent 24";

struct Cli : ::testing::Test {
    fs::path dir;
    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("celldiv_cli_" + std::to_string(::getpid()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    int run(const std::string& args, const std::string& env = "") {
        const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" CELLDIV_CLI "' " + args + " > out.txt 2> err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string file(const fs::path& p) const {
        std::ifstream is(dir / p, std::ios::binary);
        return {std::istreambuf_iterator<char>(is), {}};
    }
};

} // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("generate --n -4"), 2);
    EXPECT_EQ(run("generate --kind torus"), 2);
    EXPECT_EQ(run("divide"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, GenerateSmallDataset) {
    ASSERT_EQ(run(std::string("generate --n 10 --seed 3 --out ws") + kSmall), 0) << file("err.txt");
    const auto m = load_manifest(dir / "ws" / "manifest.json");
    EXPECT_EQ(m.count(Split::train), 8u);
    EXPECT_EQ(m.count(Split::val), 1u);
    EXPECT_EQ(m.count(Split::test), 1u);
    EXPECT_TRUE(fs::exists(dir / "ws" / ".celldiv-workspace"));
    const std::string csv = file("ws/dataset.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,split,kind,e,f,v,voxels,interface_faces,volume_ratio");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
    // the workspace variable picks the destination when --out is absent
    ASSERT_EQ(run(std::string("generate --n 4 --seed 3") + kSmall, "CELLDIV_WORKSPACE=env_ws"), 0) << file("err.txt");
    EXPECT_EQ(load_manifest(dir / "env_ws" / "manifest.json").entries.size(), 4u);
}

TEST_F(Cli, GenerateMetropolisHonoursTargetRatio) {
    ASSERT_EQ(run(std::string("generate --n 3 --rule metropolis --target-ratio 0.3 --out ws") + kSmall), 0) << file("err.txt");
    const auto m = load_manifest(dir / "ws" / "manifest.json");
    for (const auto& e : m.entries) EXPECT_NEAR(volume_ratio(load_sample(m, e).target), 0.3, 0.02) << e.id;
}

TEST_F(Cli, DivideIsIdempotentAndChecksInput) {
    const auto cell = generate_cuboid({ShapeKind::cuboid, 2, 1, 32000, 0});
    write_vxg(dir / "cell.vxg", cell, VxgKind::mask);
    ASSERT_EQ(run("divide --in cell.vxg --rule errera --seed 5 --out a.vxg --csv stats.csv"), 0) << file("err.txt");
    ASSERT_EQ(run("divide --in cell.vxg --rule errera --seed 5 --out b.vxg --csv stats.csv"), 0);
    EXPECT_EQ(file("a.vxg"), file("b.vxg"));
    const auto div = read_vxg(dir / "a.vxg");
    EXPECT_EQ(div.kind, VxgKind::division);
    const double faces = double(interface_area(div.grid).count);
    const auto edges = cuboid_edges(2, 1, 32000);
    EXPECT_NEAR(faces, edges[1] * edges[2], 0.05 * edges[1] * edges[2]);
    const std::string csv = file("stats.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "cell_id,rule,interface_faces,volume_ratio,energy,seed");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

    ASSERT_EQ(run("divide --in cell.vxg --rule metropolis --sweeps 50 --seed 9 --out m1.vxg"), 0);
    ASSERT_EQ(run("divide --in cell.vxg --rule metropolis --sweeps 50 --seed 9 --out m2.vxg"), 0);
    EXPECT_EQ(file("m1.vxg"), file("m2.vxg"));

    write_vxg(dir / "empty.vxg", LabelGrid(Dims{5, 5, 5}), VxgKind::mask);
    EXPECT_EQ(run("divide --in empty.vxg"), 2);
    EXPECT_NE(file("err.txt").find("empty"), std::string::npos);
    EXPECT_EQ(run("divide --in missing.vxg"), 2);
    std::ofstream(dir / "junk.vxg") << "not a voxel file\n";
    EXPECT_EQ(run("divide --in junk.vxg"), 2);
}

TEST_F(Cli, TrainPredictEvaluateExport) {
    ASSERT_EQ(run(std::string("generate --n 10 --seed 1 --out ws") + kSmall), 0) << file("err.txt");
    ASSERT_EQ(run("--workspace ws --deterministic --seed 2 train --depth 3 --base-channels 4 --steps 300 --batch 2 --lr 3e-3 "
                  "--val-interval 50"),
              0)
        << file("err.txt");
    EXPECT_TRUE(fs::exists(dir / "ws/checkpoints/model.munet"));
    const std::string log = file("ws/reports/train_log.csv");
    EXPECT_EQ(log.substr(0, log.find('\n')), "step,train_loss,val_loss,wall_time");

    const auto m = load_manifest(dir / "ws" / "manifest.json");
    const auto& entry = *m.split(Split::train).front();
    ASSERT_EQ(run("predict --checkpoint ws/checkpoints/model.munet --in ws/" + entry.mother + " --out pred.vxg"), 0)
        << file("err.txt");
    const auto pred = read_vxg(dir / "pred.vxg").grid;
    EXPECT_TRUE(DivisionPattern::is_valid(pred));
    const auto target = read_vxg(dir / "ws" / entry.target).grid;
    EXPECT_EQ(merge_daughters(pred), binarize(target));
    std::size_t same = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) same += target[i] != 0 && pred[i] == target[i];
    const double n = double(target.foreground_count());
    EXPECT_GE(std::max(double(same), n - double(same)) / n, 0.95);

    ASSERT_EQ(run("--workspace ws --seed 4 evaluate --checkpoint checkpoints/model.munet --split all "
                  "--experiments padding,rotation,erosion,volume,elongation"),
              0)
        << file("err.txt");
    for (const char* f : {"records.csv", "padding.csv", "rotation.csv", "erosion.csv", "volume_ratio.csv", "elongation.csv",
                          "summary.csv"})
        EXPECT_TRUE(fs::exists(dir / "ws/reports" / f)) << f;
    const std::string rec = file("ws/reports/records.csv");
    EXPECT_EQ(rec.substr(0, rec.find('\n')), kEvalCsvHeader);
    EXPECT_EQ(std::count(rec.begin(), rec.end(), '\n'), 11);

    ASSERT_EQ(run("export --in pred.vxg --out mesh.obj --what both --csv mesh.csv"), 0) << file("err.txt");
    const std::string obj = file("mesh.obj");
    EXPECT_NE(obj.find("o surface"), std::string::npos);
    EXPECT_NE(obj.find("o interface"), std::string::npos);
    EXPECT_EQ(obj.find("f 0 "), std::string::npos);

    EXPECT_EQ(run("predict --checkpoint ws/reports/records.csv --in pred.vxg --out x.vxg"), 2);
    EXPECT_EQ(run("--workspace ws evaluate --split test"), 2);
}

TEST_F(Cli, OracleEvaluationIsPerfect) {
    ASSERT_EQ(run(std::string("generate --n 5 --seed 2 --out ws") + kSmall), 0) << file("err.txt");
    ASSERT_EQ(run("--workspace ws evaluate --oracle --split all --experiments erosion"), 0) << file("err.txt");
    std::istringstream rec(file("ws/reports/records.csv"));
    std::string line;
    std::getline(rec, line);
    int rows = 0;
    while (std::getline(rec, line)) {
        ++rows;
        EXPECT_EQ(line.substr(line.find(',') + 1, 2), "1,") << line;
    }
    EXPECT_EQ(rows, 5);
}

TEST_F(Cli, ExportInterfaceFaceCount) {
    LabelGrid g(Dims{40, 20, 20});
    for (int z = 0; z < 20; ++z)
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 40; ++x) g(x, y, z) = x < 20 ? 1 : 2;
    write_vxg(dir / "split.vxg", g, VxgKind::division);
    ASSERT_EQ(run("export --in split.vxg --out i.obj --what interface"), 0);
    const std::string obj = file("i.obj");
    std::size_t quads = 0;
    for (auto at = obj.find("\nf "); at != std::string::npos; at = obj.find("\nf ", at + 1)) ++quads;
    EXPECT_EQ(quads, 400u);
    write_vxg(dir / "mask.vxg", binarize(g), VxgKind::mask);
    ASSERT_EQ(run("export --in mask.vxg --out e.obj --what interface"), 0);
    EXPECT_NE(file("err.txt").find("warning"), std::string::npos);
    EXPECT_EQ(run("export --in mask.vxg --out e.obj --what volume"), 2);
}

TEST_F(Cli, NumericFailuresExitWithThree) {
    // zero weights give tied logits: every voxel goes to daughter 1
    nn::UNetConfig cfg;
    cfg.depth = 2;
    cfg.base_channels = 2;
    nn::MaskedUNet<float> model(cfg, 0);
    for (auto& p : model.params()) std::fill(p.value.begin(), p.value.end(), 0.0f);
    nn::save_checkpoint(dir / "flat.munet", model);
    write_vxg(dir / "cell.vxg", generate_cuboid({ShapeKind::cuboid, 1.5, 1, 2000, 0}), VxgKind::mask);
    EXPECT_EQ(run("predict --checkpoint flat.munet --in cell.vxg --out p.vxg"), 3);
    EXPECT_FALSE(fs::exists(dir / "p.vxg"));

    ASSERT_EQ(run(std::string("generate --n 4 --out ws") + kSmall), 0);
    EXPECT_EQ(run("--workspace ws train --depth 2 --base-channels 2 --steps 20 --batch 2 --lr 1e38"), 3) << file("err.txt");
}
