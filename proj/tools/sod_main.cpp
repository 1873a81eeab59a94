#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "sodkit/gradcheck.hpp"
#include "sodkit/pixel_shuffle.hpp"
#include "sodkit/runner.hpp"

namespace {

using namespace sodkit;

// Shared --config / --set handling: file first, then explicit overrides.
struct ConfigArgs {
    std::string config_file;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "flat key=value config file");
        app->add_option("--set", sets, "override, e.g. --set epochs=5")->take_all();
    }

    RunConfig build() const {
        RunConfig cfg;
        if (!config_file.empty()) load_config_file(cfg, config_file);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got: " + kv);
            apply_config_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }
};

int cmd_gradcheck(int seeds) {
    const auto suite = run_gradient_suite(seeds);
    bool all = true;
    for (const auto& e : suite) {
        std::printf("%-22s max_rel_err %.3e  tol %.0e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.tol, e.pass ? "pass" : "FAIL");
        all = all && e.pass;
    }
    if (!all) throw NumericalError("gradient suite failed");
    return 0;
}

void cmd_demo_shuffle(const std::string& input, std::uint64_t seed, int side, int factor,
                      const std::filesystem::path& out_dir) {
    Image img;
    if (!input.empty()) {
        img = read_pnm(input);
    } else {
        img = sample_image(generate_sample(seed, side));
    }
    if (img.width % factor != 0 || img.height % factor != 0)
        throw ValidationError("demo-shuffle: image side must be divisible by the factor");
    std::filesystem::create_directories(out_dir);
    auto save = [&](const std::filesystem::path& p, const Image& im) {
        im.channels == 3 ? write_ppm(p, im) : write_pgm(p, im);
    };
    save(out_dir / (img.channels == 3 ? "original.ppm" : "original.pgm"), img);

    // lossy path: bilinear down, then back up
    Image down = resize_bilinear(img, img.width / factor, img.height / factor);
    save(out_dir / (img.channels == 3 ? "bilinear_down.ppm" : "bilinear_down.pgm"), down);
    Image restored = resize_bilinear(down, img.width, img.height);
    save(out_dir / (img.channels == 3 ? "bilinear_restored.ppm" : "bilinear_restored.pgm"),
         restored);

    // lossless path: unshuffle to sub-band planes, shuffle back bit-exactly
    Shape hi{1, img.channels, img.height, img.width};
    Shape lo_shape;
    std::vector<double> lo;
    unshuffle_raw(hi, img.v, factor, lo_shape, lo);
    const size_t plane = static_cast<size_t>(lo_shape[2]) * lo_shape[3];
    Image band{lo_shape[3], lo_shape[2], img.channels, {}};
    band.v.assign(lo.begin(), lo.begin() + static_cast<size_t>(img.channels) * plane);
    save(out_dir / (img.channels == 3 ? "shuffle_down.ppm" : "shuffle_down.pgm"), band);
    Shape back_shape;
    std::vector<double> back;
    shuffle_raw(lo_shape, lo, factor, back_shape, back);
    Image identical{img.width, img.height, img.channels, std::move(back)};
    save(out_dir / (img.channels == 3 ? "shuffle_restored.ppm" : "shuffle_restored.pgm"),
         identical);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"salient-object-detection toolkit"};
    app.require_subcommand(1);

    ConfigArgs train_cfg, eval_cfg, infer_cfg;

    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cfg.attach(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    eval_cfg.attach(eval_cmd);
    std::string eval_ckpt, eval_split_name = "val", eval_out;
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--split", eval_split_name, "train|val");
    eval_cmd->add_option("--out", eval_out, "report directory")->required();

    auto* infer_cmd = app.add_subcommand("infer", "run single-image inference");
    infer_cfg.attach(infer_cmd);
    std::string infer_ckpt, infer_in, infer_out;
    infer_cmd->add_option("--checkpoint", infer_ckpt)->required();
    infer_cmd->add_option("--input", infer_in, "8-bit PGM/PPM image")->required();
    infer_cmd->add_option("--output", infer_out, "output PGM path")->required();

    auto* metrics_cmd = app.add_subcommand("metrics", "score a prediction directory");
    std::string m_pred, m_gt, m_out;
    metrics_cmd->add_option("--pred", m_pred, "directory of predicted .pgm maps")->required();
    metrics_cmd->add_option("--gt", m_gt, "directory of ground-truth .pgm masks")->required();
    metrics_cmd->add_option("--out", m_out, "report directory")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "run the gradient-check suite");
    int grad_seeds = 20;
    grad_cmd->add_option("--seeds", grad_seeds, "random restarts per primitive");

    auto* demo_cmd =
        app.add_subcommand("demo-shuffle", "compare bilinear vs shuffle downscaling");
    std::string demo_in, demo_out = "demo_shuffle";
    std::uint64_t demo_seed = 0;
    int demo_side = 64, demo_factor = 2;
    demo_cmd->add_option("--input", demo_in, "source image (default: synthetic sample)");
    demo_cmd->add_option("--seed", demo_seed, "synthetic sample seed");
    demo_cmd->add_option("--side", demo_side, "synthetic sample side");
    demo_cmd->add_option("--factor", demo_factor, "downscaling factor");
    demo_cmd->add_option("--out", demo_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            const auto res = sodkit::train(train_cfg.build());
            std::printf("best epoch %d, val MAE %.17g\n", res.best_epoch, res.best_val_mae);
            std::printf("checkpoints: %s, %s\n", res.init_ckpt.string().c_str(),
                        res.best_ckpt.string().c_str());
        } else if (eval_cmd->parsed()) {
            const auto r = sodkit::eval_split(eval_cfg.build(), eval_ckpt, eval_split_name,
                                              eval_out);
            std::printf("images %d  mae %.6f  fbeta_max %.6f  fbeta_adaptive %.6f  "
                        "e %.6f  s %.6f\n",
                        r.images, r.mae, r.fbeta_max, r.fbeta_adaptive, r.e_measure,
                        r.s_measure);
        } else if (infer_cmd->parsed()) {
            sodkit::infer(infer_cfg.build(), infer_ckpt, infer_in, infer_out);
        } else if (metrics_cmd->parsed()) {
            const auto r = sodkit::evaluate_dataset(m_pred, m_gt);
            sodkit::write_report_csv(r, m_out);
            for (const auto& s : r.missing)
                std::fprintf(stderr, "warning: no ground truth for %s\n", s.c_str());
            std::printf("images %d  mae %.6f  fbeta_max %.6f  fbeta_adaptive %.6f  "
                        "e %.6f  s %.6f\n",
                        r.images, r.mae, r.fbeta_max, r.fbeta_adaptive, r.e_measure,
                        r.s_measure);
        } else if (grad_cmd->parsed()) {
            return cmd_gradcheck(grad_seeds);
        } else if (demo_cmd->parsed()) {
            cmd_demo_shuffle(demo_in, demo_seed, demo_side, demo_factor, demo_out);
        }
    } catch (const sodkit::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 2;
    } catch (const sodkit::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
