// Copyright 2026 The tsup Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tsup/checkpoint.hpp"
#include "tsup/dataset.hpp"
#include "tsup/errors.hpp"
#include "tsup/evaluate.hpp"
#include "tsup/gradsuite.hpp"
#include "tsup/image_png.hpp"
#include "tsup/import_qrisp.hpp"
#include "tsup/metrics.hpp"
#include "tsup/model.hpp"
#include "tsup/parallel.hpp"
#include "tsup/synth.hpp"
#include "tsup/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void echo_config(const json& j) { std::cout << "config: " << j.dump() << "\n"; }

std::string frame_name(int t) {
    std::ostringstream os;
    os << "f" << std::setw(3) << std::setfill('0') << t << ".png";
    return os.str();
}

// Directory inputs expand to every manifest.json below them.
std::vector<std::string> expand_manifests(const std::string& input) {
    if (fs::is_directory(input)) {
        auto found = tsup::find_manifests(input);
        if (found.empty()) throw tsup::DataError("no manifest.json under " + input);
        return found;
    }
    if (!fs::exists(input)) throw tsup::DataError("input does not exist: " + input);
    return {input};
}

tsup::ModelState load_model(const std::string& checkpoint) {
    return tsup::load_checkpoint(checkpoint).state;
}

struct SynthArgs {
    std::string out;
    int scenes = 8;
    int frames = 120;
    int size = 128;
    int scale = 2;
    std::uint64_t seed = 0;
};

struct ImportArgs {
    std::string input;
    std::string out;
    tsup::ImportOptions opt;
};

struct TrainArgs {
    std::string config;
    std::string data;
    std::vector<std::string> manifests;
    std::string out;
    int iters = 5000;
    int batch = 4;
    int clip = 16;
    int crop = 96;
    double lr = 1e-4;
    std::vector<int> milestones;
    double fraction = 0.8;
    int checkpoint_every = 500;
    int validate_every = 500;
    std::uint64_t seed = 0;
    std::string variant = "S";
    int scale = 2;
    bool no_dilation = false;
    bool no_blending = false;
    bool no_condition_first = false;
    bool no_condition_last = false;
    bool resume = false;
};

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::vector<std::string> manifests;
    std::string out;
    int crop_size = 96;
    bool no_blending = false;
    bool no_dilation = false;
};

struct UpscaleArgs {
    std::string checkpoint;
    std::string input;
    std::string out;
    std::string variant;
    int scale = 2;
    std::uint64_t seed = 0;
    bool no_blending = false;
    bool no_dilation = false;
};

struct ProfileArgs {
    std::string checkpoint;
    std::string variant = "M";
    int scale = 2;
    int height = 96;
    int width = 96;
    int steps = 40;
    int warmup = 8;
    std::uint64_t seed = 0;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tsup: temporal supersampling toolkit"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker threads (1 = deterministic single-thread mode)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    int rc = 0;

    SynthArgs sg;
    auto* c_sg = app.add_subcommand("synth-gen", "Generate a synthetic dataset with ground truth");
    c_sg->fallthrough();
    c_sg->add_option("--out", sg.out, "output dataset directory")
        ->required()
        ->envname("TSUP_OUT_DIR");
    c_sg->add_option("--scenes", sg.scenes, "training scene count")->capture_default_str();
    c_sg->add_option("--frames", sg.frames, "frames per scene")->capture_default_str();
    c_sg->add_option("--size", sg.size, "HR frame side length")->capture_default_str();
    c_sg->add_option("--scale", sg.scale, "upscaling factor")->capture_default_str();
    c_sg->add_option("--seed", sg.seed, "generator seed")->capture_default_str();
    c_sg->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "synth-gen"},
                         {"out", sg.out},
                         {"scenes", sg.scenes},
                         {"frames", sg.frames},
                         {"size", sg.size},
                         {"scale", sg.scale},
                         {"seed", sg.seed},
                         {"threads", threads}});
        const auto ds = tsup::synth::make_dataset(sg.out, sg.scenes, sg.frames, sg.size, sg.scale,
                                                  sg.seed);
        std::cout << "wrote " << ds.train_manifests.size() << " train and "
                  << ds.test_manifests.size() << " test sequences under " << sg.out << "\n";
    });

    ImportArgs im;
    auto* c_im = app.add_subcommand("import-qrisp", "Convert a QRISP export to the canonical layout");
    c_im->fallthrough();
    c_im->add_option("--input", im.input, "source manifest.json or directory of manifests")
        ->required();
    c_im->add_option("--out", im.out, "output dataset directory")
        ->required()
        ->envname("TSUP_OUT_DIR");
    c_im->add_flag("--flip-y", im.opt.flip_y, "flip the vertical motion axis");
    c_im->add_flag("--negate-motion", im.opt.negate_motion, "negate both motion components");
    c_im->add_option("--scale", im.opt.scale, "upscaling factor of the export")->capture_default_str();
    c_im->add_option("--modality-bias", im.opt.modality_bias,
                     "value substituted for {bias} tokens in source paths");
    c_im->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "import-qrisp"},
                         {"input", im.input},
                         {"out", im.out},
                         {"flip_y", im.opt.flip_y},
                         {"negate_motion", im.opt.negate_motion},
                         {"scale", im.opt.scale},
                         {"modality_bias", im.opt.modality_bias},
                         {"threads", threads}});
        const auto srcs = expand_manifests(im.input);
        for (const std::string& src : srcs) {
            fs::path out_dir(im.out);
            if (srcs.size() > 1 || fs::is_directory(im.input))
                out_dir /= fs::relative(fs::path(src).parent_path(), im.input);
            const auto res = tsup::import_qrisp_sequence(src, out_dir.string(), im.opt);
            std::cout << "imported " << src << " -> " << res.manifest_path << " (" << res.frames
                      << " frames, " << res.clamped_motion << " clamped motion samples)\n";
        }
    });

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train a model on a converted or synthetic dataset");
    c_tr->fallthrough();
    c_tr->add_option("--config", tr.config, "JSON TrainConfig file; flags below override it");
    auto* o_data = c_tr->add_option("--data", tr.data, "dataset root scanned for manifests");
    auto* o_manifest = c_tr->add_option("--manifest", tr.manifests, "explicit manifest path (repeatable)");
    auto* o_out = c_tr->add_option("--out", tr.out, "run directory for checkpoints and logs")
                      ->envname("TSUP_OUT_DIR");
    auto* o_iters = c_tr->add_option("--iters", tr.iters, "total iterations")->capture_default_str();
    auto* o_batch = c_tr->add_option("--batch", tr.batch, "clips per batch")->capture_default_str();
    auto* o_clip = c_tr->add_option("--clip", tr.clip, "frames per clip")->capture_default_str();
    auto* o_crop = c_tr->add_option("--crop", tr.crop, "HR crop side length")->capture_default_str();
    auto* o_lr = c_tr->add_option("--lr", tr.lr, "initial learning rate")->capture_default_str();
    auto* o_miles = c_tr->add_option(
        "--milestones", tr.milestones,
        "iterations where the rate halves; when not given, defaults at or past --iters are dropped");
    auto* o_frac = c_tr->add_option("--fraction", tr.fraction, "train split fraction")->capture_default_str();
    auto* o_ckpt_every = c_tr->add_option("--checkpoint-every", tr.checkpoint_every,
                                          "iterations between checkpoints")->capture_default_str();
    auto* o_val_every = c_tr->add_option("--validate-every", tr.validate_every,
                                         "iterations between validations (0 = never)")->capture_default_str();
    auto* o_seed = c_tr->add_option("--seed", tr.seed, "training seed")->capture_default_str();
    auto* o_variant = c_tr->add_option("--variant", tr.variant, "model size: S, M or L")->capture_default_str();
    auto* o_scale = c_tr->add_option("--scale", tr.scale, "upscaling factor")->capture_default_str();
    c_tr->add_flag("--no-dilation", tr.no_dilation, "disable depth-informed MV dilation");
    c_tr->add_flag("--no-blending", tr.no_blending, "disable history blending");
    c_tr->add_flag("--no-condition-first", tr.no_condition_first,
                   "use a fixed first conv instead of jitter conditioning");
    c_tr->add_flag("--no-condition-last", tr.no_condition_last,
                   "use a fixed last conv instead of jitter conditioning");
    c_tr->add_flag("--resume", tr.resume, "resume from the run directory's checkpoint");
    c_tr->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        tsup::TrainConfig cfg;
        if (!tr.config.empty()) cfg = tsup::load_train_config(tr.config);
        if (o_variant->count() || o_scale->count()) {
            const std::string variant = o_variant->count() ? tr.variant : cfg.model.variant;
            const int scale = o_scale->count() ? tr.scale : cfg.model.scale;
            const tsup::ModelConfig keep = cfg.model;
            cfg.model = tsup::ModelConfig::named(variant, scale);
            cfg.model.use_dilation = keep.use_dilation;
            cfg.model.use_blending = keep.use_blending;
            cfg.model.condition_first = keep.condition_first;
            cfg.model.condition_last = keep.condition_last;
        } else if (tr.config.empty()) {
            cfg.model = tsup::ModelConfig::named(tr.variant, tr.scale);
        }
        if (tr.no_dilation) cfg.model.use_dilation = false;
        if (tr.no_blending) cfg.model.use_blending = false;
        if (tr.no_condition_first) cfg.model.condition_first = false;
        if (tr.no_condition_last) cfg.model.condition_last = false;
        if (o_data->count()) cfg.data_dir = tr.data;
        if (o_manifest->count()) cfg.manifests = tr.manifests;
        if (o_out->count()) cfg.out_dir = tr.out;
        if (o_iters->count()) cfg.total_iters = tr.iters;
        if (o_batch->count()) cfg.batch_size = tr.batch;
        if (o_clip->count()) cfg.clip_len = tr.clip;
        if (o_crop->count()) cfg.hr_crop = tr.crop;
        if (o_lr->count()) cfg.lr_initial = tr.lr;
        if (o_miles->count())
            cfg.lr_milestones = tr.milestones;
        else
            std::erase_if(cfg.lr_milestones, [&](int m) { return m >= cfg.total_iters; });
        if (o_frac->count()) cfg.train_fraction = tr.fraction;
        if (o_ckpt_every->count()) cfg.checkpoint_every = tr.checkpoint_every;
        if (o_val_every->count()) cfg.validate_every = tr.validate_every;
        if (o_seed->count()) cfg.seed = tr.seed;
        if (cfg.out_dir.empty()) throw tsup::UsageError("train: --out (or config out_dir) is required");
        cfg.validate();

        json j = tsup::train_config_to_json(cfg);
        j["command"] = "train";
        j["resume"] = tr.resume;
        j["threads"] = threads;
        echo_config(j);

        const tsup::FitResult res = tsup::fit(cfg, tr.resume, &std::cout);
        for (const std::string& w : res.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "finished " << res.iterations << " iterations, final loss "
                  << tsup::metric_csv(res.final_loss);
        if (res.final_val_psnr) std::cout << ", val psnr " << tsup::metric_csv(*res.final_val_psnr);
        std::cout << "\ncheckpoint: " << res.checkpoint_path << "\n";
    });

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Score a checkpoint on sequences with HR targets");
    c_ev->fallthrough();
    c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
    auto* o_ev_data = c_ev->add_option("--data", ev.data, "dataset root scanned for manifests");
    auto* o_ev_manifest = c_ev->add_option("--manifest", ev.manifests, "explicit manifest path (repeatable)");
    c_ev->add_option("--out", ev.out, "report directory")->required()->envname("TSUP_OUT_DIR");
    c_ev->add_option("--crop-size", ev.crop_size, "comparison crop side length")->capture_default_str();
    c_ev->add_flag("--no-blending", ev.no_blending, "force history blending off");
    c_ev->add_flag("--no-dilation", ev.no_dilation, "force MV dilation off");
    c_ev->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "eval"},
                         {"checkpoint", ev.checkpoint},
                         {"data", ev.data},
                         {"manifests", ev.manifests},
                         {"out", ev.out},
                         {"crop_size", ev.crop_size},
                         {"no_blending", ev.no_blending},
                         {"no_dilation", ev.no_dilation},
                         {"threads", threads}});
        if (!o_ev_data->count() && !o_ev_manifest->count())
            throw tsup::UsageError("eval: pass --data or --manifest");
        std::vector<std::string> manifests = ev.manifests;
        if (o_ev_data->count()) {
            auto found = tsup::find_manifests(ev.data);
            manifests.insert(manifests.end(), found.begin(), found.end());
        }
        tsup::ModelState state = load_model(ev.checkpoint);
        if (ev.no_blending) state.config.use_blending = false;
        if (ev.no_dilation) state.config.use_dilation = false;
        tsup::EvalOptions opts;
        opts.out_dir = ev.out;
        opts.crop_size = ev.crop_size;
        const tsup::EvalReport rep = tsup::evaluate_manifests(state, manifests, opts);
        const tsup::SegmentScore& a = rep.aggregate;
        std::cout << "aggregate over " << rep.rows.size() << " segments (" << a.frames
                  << " frames): psnr " << tsup::metric_csv(a.psnr) << ", ssim "
                  << tsup::metric_csv(a.ssim) << ", pixel_std " << tsup::metric_csv(a.pixel_std)
                  << ", baseline psnr " << tsup::metric_csv(a.baseline_psnr) << ", baseline ssim "
                  << tsup::metric_csv(a.baseline_ssim) << "\n";
        std::cout << "report: " << (fs::path(ev.out) / "report.csv").string() << "\n";
    });

    UpscaleArgs up;
    auto* c_up = app.add_subcommand("upscale", "Run a model over sequences and write HR frames");
    c_up->fallthrough();
    auto* o_up_ckpt = c_up->add_option("--checkpoint", up.checkpoint, "model checkpoint");
    c_up->add_option("--input", up.input, "manifest.json or directory of manifests")->required();
    c_up->add_option("--out", up.out, "output directory for PNG frames")
        ->required()
        ->envname("TSUP_OUT_DIR");
    auto* o_up_variant =
        c_up->add_option("--variant", up.variant, "model size for a fresh untrained model");
    c_up->add_option("--scale", up.scale, "upscaling factor for a fresh untrained model")
        ->capture_default_str();
    c_up->add_option("--seed", up.seed, "init seed for a fresh untrained model")->capture_default_str();
    c_up->add_flag("--no-blending", up.no_blending, "force history blending off");
    c_up->add_flag("--no-dilation", up.no_dilation, "force MV dilation off");
    o_up_ckpt->excludes(o_up_variant);
    c_up->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "upscale"},
                         {"checkpoint", up.checkpoint},
                         {"input", up.input},
                         {"out", up.out},
                         {"variant", up.variant},
                         {"scale", up.scale},
                         {"seed", up.seed},
                         {"no_blending", up.no_blending},
                         {"no_dilation", up.no_dilation},
                         {"threads", threads}});
        if (up.checkpoint.empty() && up.variant.empty())
            throw tsup::UsageError("upscale: pass --checkpoint or --variant");
        tsup::ModelState state =
            up.checkpoint.empty()
                ? tsup::init_params(tsup::ModelConfig::named(up.variant, up.scale),
                                    std::uint32_t(up.seed))
                : load_model(up.checkpoint);
        if (up.no_blending) state.config.use_blending = false;
        if (up.no_dilation) state.config.use_dilation = false;
        for (const std::string& mpath : expand_manifests(up.input)) {
            const tsup::Sequence seq = tsup::load_sequence(mpath, state.config.scale, false);
            const std::vector<tsup::Raster> outs = tsup::run_model(state, seq);
            const fs::path dir =
                fs::path(up.out) / (seq.manifest.scene + "_" + seq.manifest.segment);
            fs::create_directories(dir);
            for (std::size_t t = 0; t < outs.size(); ++t)
                tsup::write_png((dir / frame_name(int(t))).string(), tsup::raster_to_png8(outs[t]));
            std::cout << "wrote " << outs.size() << " frames (" << outs.front().height() << "x"
                      << outs.front().width() << ") to " << dir.string() << "\n";
        }
    });

    bool grad_quick = false;
    auto* c_gc = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    c_gc->fallthrough();
    c_gc->add_flag("--quick", grad_quick, "skip the 16-step rollout case");
    c_gc->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "gradcheck"}, {"quick", grad_quick}, {"threads", threads}});
        std::vector<tsup::GradCase> table = tsup::gradient_suite();
        if (grad_quick)
            std::erase_if(table, [](const tsup::GradCase& c) { return c.name.starts_with("rollout"); });
        if (!tsup::format_gradient_table(table, std::cout)) {
            std::cerr << "error: gradient check failed\n";
            rc = 1;
        }
    });

    ProfileArgs pf;
    auto* c_pf = app.add_subcommand("profile", "Measure per-stage step latency");
    c_pf->fallthrough();
    auto* o_pf_ckpt = c_pf->add_option("--checkpoint", pf.checkpoint, "model checkpoint");
    auto* o_pf_variant = c_pf->add_option("--variant", pf.variant, "model size: S, M or L")
                             ->capture_default_str();
    c_pf->add_option("--scale", pf.scale, "upscaling factor")->capture_default_str();
    c_pf->add_option("--height", pf.height, "HR height (multiple of 8*scale)")->capture_default_str();
    c_pf->add_option("--width", pf.width, "HR width (multiple of 8*scale)")->capture_default_str();
    c_pf->add_option("--steps", pf.steps, "timed steps")->capture_default_str();
    c_pf->add_option("--warmup", pf.warmup, "untimed warmup steps")->capture_default_str();
    c_pf->add_option("--seed", pf.seed, "init seed for a fresh model")->capture_default_str();
    o_pf_ckpt->excludes(o_pf_variant);
    c_pf->callback([&] {
        tsup::ThreadPool::instance().set_threads(threads);
        echo_config(json{{"command", "profile"},
                         {"checkpoint", pf.checkpoint},
                         {"variant", pf.variant},
                         {"scale", pf.scale},
                         {"height", pf.height},
                         {"width", pf.width},
                         {"steps", pf.steps},
                         {"warmup", pf.warmup},
                         {"seed", pf.seed},
                         {"threads", threads}});
        tsup::ModelState state =
            pf.checkpoint.empty()
                ? tsup::init_params(tsup::ModelConfig::named(pf.variant, pf.scale),
                                    std::uint32_t(pf.seed))
                : load_model(pf.checkpoint);
        const tsup::StageProfile p = tsup::profile_model(state, pf.height, pf.width, pf.steps,
                                                         pf.warmup);
        std::cout << "stage medians over " << p.steps << " steps at " << pf.height << "x"
                  << pf.width << " (variant " << state.config.variant << ", scale "
                  << state.config.scale << "):\n"
                  << "  mv dilation  " << p.mv_dilation_ms << " ms\n"
                  << "  warping      " << p.warping_ms << " ms\n"
                  << "  network      " << p.network_ms << " ms\n"
                  << "  total        " << p.total_ms << " ms\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const tsup::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
