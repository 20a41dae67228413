// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tsup/dataset.hpp"
#include "tsup/image_png.hpp"
#include "tsup/raster_file.hpp"
#include "tsup/synth.hpp"

using namespace tsup;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
};

std::string cli() { return TSUP_CLI_PATH; }

std::string fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunResult run(const std::string& cmd) {
    static int serial = 0;
    const std::string log =
        (fs::temp_directory_path() / ("tsup_cli_log_" + std::to_string(serial++))).string();
    const int status = std::system((cmd + " > " + log + " 2>&1").c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(log);
    fs::remove(log);
    return r;
}

bool same_tree_bytes(const fs::path& a, const fs::path& b) {
    std::vector<std::string> ra, rb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a).string());
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b).string());
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ra != rb) return false;
    for (const std::string& rel : ra)
        if (slurp((a / rel).string()) != slurp((b / rel).string())) return false;
    return true;
}

struct CliEnv {
    std::string ds;
    std::string run_dir;
    std::string train_out;
};

const CliEnv& env() {
    static CliEnv e = [] {
        CliEnv v;
        v.ds = fresh_dir("tsup_cli_ds");
        synth::make_dataset(v.ds, 1, 16, 32, 2, 505);
        v.run_dir = fresh_dir("tsup_cli_run");
        const RunResult r =
            run(cli() + " train --data " + v.ds + "/train --out " + v.run_dir +
                " --variant S --scale 2 --iters 2 --batch 1 --crop 32 --validate-every 0 --seed 3");
        if (r.code != 0) {
            ADD_FAILURE() << "fixture train failed (" << r.code << "):\n" << r.out;
        }
        v.train_out = r.out;
        return v;
    }();
    return e;
}

} // namespace

TEST(Cli, HelpListsEverySubcommand) {
    const RunResult top = run(cli() + " --help");
    EXPECT_EQ(top.code, 0);
    for (const char* name :
         {"synth-gen", "import-qrisp", "train", "eval", "upscale", "gradcheck", "profile"})
        EXPECT_NE(top.out.find(name), std::string::npos) << name;

    const RunResult tr = run(cli() + " train --help");
    EXPECT_EQ(tr.code, 0);
    for (const char* flag : {"--milestones", "--no-blending", "--resume", "--threads"})
        EXPECT_NE(tr.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(cli()).code, 2);
    EXPECT_EQ(run(cli() + " synth-gen --out /tmp/x --bogus").code, 2);
    EXPECT_EQ(run(cli() + " eval --checkpoint nope.qssc --out /tmp/x").code, 2);
    EXPECT_EQ(run(cli() + " upscale --input x --out /tmp/x").code, 2);
    EXPECT_EQ(run(cli() + " upscale --checkpoint a --variant S --input x --out /tmp/x").code, 2);
}

TEST(Cli, DomainErrorsExitOne) {
    const std::string out = fresh_dir("tsup_cli_dom");
    EXPECT_EQ(run(cli() + " eval --checkpoint nope.qssc --manifest nope.json --out " + out).code, 1);
    EXPECT_EQ(run(cli() + " train --data nope_dir --out " + out + " --iters 2").code, 1);
    EXPECT_EQ(run(cli() + " train --data nope_dir --out " + out + " --iters 10 --milestones 10").code, 1);
}

TEST(Cli, SynthGenIsSeedReproducible) {
    const std::string a = fresh_dir("tsup_cli_sg_a");
    const std::string b = fresh_dir("tsup_cli_sg_b");
    const std::string flags = " synth-gen --scenes 1 --frames 16 --size 32 --scale 2 --seed 11 --out ";
    const RunResult ra = run(cli() + flags + a);
    const RunResult rb = run(cli() + flags + b);
    ASSERT_EQ(ra.code, 0);
    ASSERT_EQ(rb.code, 0);
    EXPECT_NE(ra.out.find("config: {"), std::string::npos);
    EXPECT_NE(ra.out.find("wrote 1 train and 1 test sequences"), std::string::npos);
    EXPECT_TRUE(same_tree_bytes(a, b));
}

TEST(Cli, TrainWritesRunArtifactsAndEchoesConfig) {
    const CliEnv& e = env();
    EXPECT_TRUE(fs::exists(fs::path(e.run_dir) / "model.qssc"));
    EXPECT_TRUE(fs::exists(fs::path(e.run_dir) / "train_log.csv"));
    EXPECT_NE(e.train_out.find("config: {"), std::string::npos);
    EXPECT_NE(e.train_out.find("\"variant\":\"S\""), std::string::npos);
    EXPECT_NE(e.train_out.find("finished 2 iterations"), std::string::npos);
    EXPECT_NE(e.train_out.find("checkpoint: "), std::string::npos);
    const std::string log = slurp((fs::path(e.run_dir) / "train_log.csv").string());
    EXPECT_NE(log.find("iteration,loss,lr,val_psnr"), std::string::npos);
}

TEST(Cli, TrainResumeExtendsRun) {
    const CliEnv& e = env();
    const std::string dir = fresh_dir("tsup_cli_resume");
    fs::copy(e.run_dir, dir, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
    const RunResult r =
        run(cli() + " train --data " + e.ds + "/train --out " + dir +
            " --variant S --scale 2 --iters 3 --batch 1 --crop 32 --validate-every 0 --seed 3 --resume");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("finished 3 iterations"), std::string::npos);
    const std::string log = slurp((fs::path(dir) / "train_log.csv").string());
    EXPECT_NE(log.find("\n3,"), std::string::npos);
}

TEST(Cli, TrainIsBitwiseIndependentOfThreadCount) {
    const CliEnv& e = env();
    const std::string a = fresh_dir("tsup_cli_thr_a");
    const std::string b = fresh_dir("tsup_cli_thr_b");
    const std::string flags = " --variant S --scale 2 --iters 2 --batch 1 --crop 32"
                              " --validate-every 0 --seed 3 --data " + e.ds + "/train --out ";
    const RunResult ra = run(cli() + " train --threads 1" + flags + a);
    const RunResult rb = run(cli() + " train --threads 2" + flags + b);
    ASSERT_EQ(ra.code, 0) << ra.out;
    ASSERT_EQ(rb.code, 0) << rb.out;
    EXPECT_EQ(slurp((fs::path(a) / "train_log.csv").string()),
              slurp((fs::path(b) / "train_log.csv").string()));
    EXPECT_EQ(slurp((fs::path(a) / "model.qssc").string()),
              slurp((fs::path(b) / "model.qssc").string()));
}

TEST(Cli, EvalWritesReportAndCrops) {
    const CliEnv& e = env();
    const std::string out = fresh_dir("tsup_cli_eval");
    const RunResult r = run(cli() + " eval --checkpoint " + e.run_dir + "/model.qssc --data " +
                            e.ds + "/test --out " + out);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("aggregate over"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(out) / "report.csv"));
    bool any_crop = false;
    for (const auto& f : fs::directory_iterator(fs::path(out) / "crops")) any_crop |= f.is_regular_file();
    EXPECT_TRUE(any_crop);
}

TEST(Cli, UpscaleHonorsScaleContractAndSeed) {
    const CliEnv& e = env();
    const std::string a = fresh_dir("tsup_cli_up_a");
    const std::string b = fresh_dir("tsup_cli_up_b");
    const std::string flags = " upscale --variant S --scale 2 --seed 9 --input " + e.ds + "/test --out ";
    const RunResult ra = run(cli() + flags + a);
    const RunResult rb = run(cli() + flags + b);
    ASSERT_EQ(ra.code, 0) << ra.out;
    ASSERT_EQ(rb.code, 0) << rb.out;
    EXPECT_NE(ra.out.find("wrote 16 frames (32x32)"), std::string::npos);

    fs::path seq_dir;
    for (const auto& d : fs::directory_iterator(a))
        if (d.is_directory()) seq_dir = d.path();
    ASSERT_FALSE(seq_dir.empty());
    int frames = 0;
    for (const auto& f : fs::directory_iterator(seq_dir)) frames += f.is_regular_file();
    EXPECT_EQ(frames, 16);
    const PngImage img = read_png((seq_dir / "f000.png").string());
    EXPECT_EQ(img.width, 32);
    EXPECT_EQ(img.height, 32);
    EXPECT_EQ(img.channels, 3);
    EXPECT_TRUE(same_tree_bytes(a, b));
}

TEST(Cli, OutputDirEnvVarOverride) {
    const std::string out = fresh_dir("tsup_cli_envout");
    const RunResult r = run("TSUP_OUT_DIR=" + out + " " + cli() +
                            " synth-gen --scenes 1 --frames 16 --size 32 --scale 2 --seed 2");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(fs::path(out) / "train"));
}

TEST(Cli, GradcheckQuickPrintsPassTable) {
    const RunResult r = run(cli() + " gradcheck --quick");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("conv3x3.input"), std::string::npos);
    EXPECT_NE(r.out.find("PASS"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
    EXPECT_EQ(r.out.find("rollout"), std::string::npos);
}

TEST(Cli, ProfilePrintsStageTable) {
    const RunResult r = run(cli() + " profile --variant S --scale 2 --height 48 --width 48"
                                    " --steps 4 --warmup 1");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("mv dilation"), std::string::npos);
    EXPECT_NE(r.out.find("network"), std::string::npos);
    EXPECT_NE(r.out.find("total"), std::string::npos);
}

TEST(Cli, ImportConvertsAnExportTree) {
    const std::string src = fresh_dir("tsup_cli_imp_src");
    const std::string out = fresh_dir("tsup_cli_imp_out");

    SequenceManifest m;
    m.scene = "sceneI";
    m.segment = "seg0";
    const auto js = jitter_sequence();
    for (int t = 0; t < 2; ++t) {
        FrameRecord rec;
        rec.color = "c" + std::to_string(t) + ".png";
        rec.depth = "d" + std::to_string(t) + ".png";
        rec.motion = "m" + std::to_string(t) + ".qras";
        rec.jitter = js[std::size_t(t)];
        PngImage color;
        color.width = color.height = 8;
        color.channels = 3;
        color.pixels.assign(8 * 8 * 3, std::uint8_t(40 + t));
        write_png((fs::path(src) / rec.color).string(), color);
        PngImage depth;
        depth.width = depth.height = 8;
        depth.channels = 4;
        depth.pixels.resize(8 * 8 * 4);
        for (std::size_t px = 0; px < 64; ++px) {
            const auto bytes = encode_depth(0.25 + 0.002 * double(px));
            for (int c = 0; c < 4; ++c) depth.pixels[px * 4 + std::size_t(c)] = bytes[std::size_t(c)];
        }
        write_png((fs::path(src) / rec.depth).string(), depth);
        Raster mv(2, 8, 8);
        write_raster_file((fs::path(src) / rec.motion).string(), encode_motion_qrisp(mv, false, false));
        m.frames.push_back(std::move(rec));
    }
    write_manifest((fs::path(src) / "manifest.json").string(), m);

    const RunResult r = run(cli() + " import-qrisp --input " + src + " --out " + out + " --scale 2");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("imported"), std::string::npos);
    EXPECT_NE(r.out.find("2 frames"), std::string::npos);
    std::vector<std::string> manifests = find_manifests(out);
    ASSERT_EQ(manifests.size(), 1u);
    const Sequence seq = load_sequence(manifests[0], 2, false);
    EXPECT_EQ(seq.frames.size(), 2u);
    EXPECT_EQ(seq.manifest.scene, "sceneI");
}

TEST(Cli, EveryRunEchoesResolvedConfig) {
    const RunResult r = run(cli() + " profile --variant S --scale 2 --height 16 --width 16"
                                    " --steps 1 --warmup 0");
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(r.out.rfind("config: {", 0), 0u) << r.out;
}
