#include <doctest.h>

#include <fstream>
#include <sstream>

#include "sodkit/runner.hpp"

using namespace sodkit;

namespace {

namespace fs = std::filesystem;

RunConfig tiny_run(const fs::path& out) {
    RunConfig cfg;
    cfg.model.side = 32;
    cfg.model.widths = {4, 4, 8, 8};
    cfg.model.depths = {1, 1, 1, 1};
    cfg.model.sr_factors = {4, 2, 1, 1};
    cfg.model.cg = 16;
    cfg.model.dec_width = 8;
    cfg.batch = 4;
    cfg.epochs = 2;
    cfg.train_size = 8;
    cfg.val_size = 2;
    cfg.out_dir = out;
    return cfg;
}

fs::path temp_root() {
    const auto p = fs::temp_directory_path() / "sodkit_runner_test";
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

}  // namespace

TEST_CASE("config file parsing with overrides") {
    const auto path = temp_root() / "run.cfg";
    std::ofstream(path) << "# comment\n"
                           "side = 32\n"
                           "widths = 4,4,8,8\n"
                           "epochs = 5   # trailing comment\n"
                           "lr_decoder = 5e-4\n"
                           "rescale_mode = bilinear\n"
                           "global_context = false\n";
    RunConfig cfg;
    load_config_file(cfg, path);
    CHECK(cfg.model.side == 32);
    CHECK(cfg.model.widths == std::array<int, 4>{4, 4, 8, 8});
    CHECK(cfg.epochs == 5);
    CHECK(cfg.lr_decoder == doctest::Approx(5e-4));
    CHECK(cfg.model.rescale == RescaleMode::Bilinear);
    CHECK(!cfg.model.global_context);
    apply_config_kv(cfg, "epochs", "7");
    CHECK(cfg.epochs == 7);

    CHECK_THROWS_AS(apply_config_kv(cfg, "no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(apply_config_kv(cfg, "epochs", "three"), ConfigError);
    CHECK_THROWS_AS(apply_config_kv(cfg, "widths", "1,2,3"), ConfigError);
    CHECK_THROWS_AS(apply_config_kv(cfg, "rescale_mode", "nearest"), ConfigError);
}

TEST_CASE("out_dir resolves against the environment root") {
    RunConfig cfg;
    cfg.out_dir = "rel/run";
    setenv("SODKIT_OUT_ROOT", "/tmp/sodkit_root", 1);
    CHECK(resolve_out_dir(cfg) == fs::path("/tmp/sodkit_root/rel/run"));
    unsetenv("SODKIT_OUT_ROOT");
    CHECK(resolve_out_dir(cfg) == fs::path("rel/run"));
    cfg.out_dir = "/abs/run";
    setenv("SODKIT_OUT_ROOT", "/tmp/sodkit_root", 1);
    CHECK(resolve_out_dir(cfg) == fs::path("/abs/run"));
    unsetenv("SODKIT_OUT_ROOT");
}

TEST_CASE("epoch order is a deterministic permutation") {
    auto a = epoch_order(1, 3, 16);
    auto b = epoch_order(1, 3, 16);
    CHECK(a == b);
    CHECK(epoch_order(1, 4, 16) != a);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 16; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("assemble_batch lays out image and mask planes") {
    std::vector<Sample> samples{generate_sample(0, 32), generate_sample(1, 32)};
    auto b = assemble_batch(samples);
    CHECK(b.img->shape == Shape{2, 3, 32, 32});
    CHECK(b.mask_shape == Shape{2, 1, 32, 32});
    CHECK(std::equal(samples[1].mask.begin(), samples[1].mask.end(),
                     b.mask.begin() + 32 * 32));
    CHECK(std::equal(samples[0].image.begin(), samples[0].image.end(),
                     b.img->data.begin()));
}

TEST_CASE("training writes its artifacts and is reproducible from the init checkpoint") {
    const auto out = temp_root() / "run_a";
    fs::remove_all(out);
    auto cfg = tiny_run(out);
    const auto res = train(cfg);
    CHECK(fs::exists(res.loss_csv));
    CHECK(fs::exists(res.val_csv));
    CHECK(fs::exists(res.init_ckpt));
    CHECK(fs::exists(res.best_ckpt));
    CHECK(fs::exists(out / "best.json"));

    // loss.csv has epochs * (train_size/batch) data rows
    std::ifstream in(res.loss_csv);
    std::string header, first_row, line;
    std::getline(in, header);
    std::getline(in, first_row);
    int rows = 1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2 * 2);

    // step-0 loss recomputes exactly from the saved init checkpoint
    Network net(cfg.model, cfg.seed);
    load_checkpoint(net.params(), res.init_ckpt);
    std::vector<Sample> train_set;
    for (int i = 0; i < cfg.train_size; ++i)
        train_set.push_back(generate_sample(kTrainSeedBase + i, cfg.model.side));
    const auto order = epoch_order(cfg.seed, 1, cfg.train_size);
    std::vector<Sample> picked;
    for (int i = 0; i < cfg.batch; ++i)
        picked.push_back(augment(train_set[order[i]], augment_seed(cfg.seed, 1, 0, i)));
    LossBreakdown bd;
    run_loss(net, assemble_batch(picked), /*train=*/true, &bd);
    const auto cells = split_csv(first_row);
    REQUIRE(cells.size() == 13);
    CHECK(std::stod(cells.back()) == bd.total);

    // the eval driver reproduces the logged best validation MAE
    const auto report =
        eval_split(cfg, res.best_ckpt, "val", temp_root() / "eval_a");
    CHECK(report.mae == doctest::Approx(res.best_val_mae).epsilon(1e-10));
    CHECK(report.images == cfg.val_size);
    CHECK(fs::exists(temp_root() / "eval_a" / "pred" / "0000.pgm"));
}

TEST_CASE("two identical runs are byte identical") {
    const auto out_a = temp_root() / "det_a";
    const auto out_b = temp_root() / "det_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);
    auto cfg = tiny_run(out_a);
    cfg.epochs = 1;
    train(cfg);
    cfg.out_dir = out_b;
    train(cfg);
    CHECK(slurp(out_a / "loss.csv") == slurp(out_b / "loss.csv"));
    CHECK(slurp(out_a / "val.csv") == slurp(out_b / "val.csv"));
    CHECK(slurp(out_a / "best.ckpt") == slurp(out_b / "best.ckpt"));
}

TEST_CASE("zero learning rates leave the parameters bit identical") {
    const auto out = temp_root() / "zero_lr";
    fs::remove_all(out);
    auto cfg = tiny_run(out);
    cfg.epochs = 1;
    cfg.lr_encoder = cfg.lr_branch = cfg.lr_decoder = 0.0;
    const auto res = train(cfg);
    // trainable parameters must be untouched; batch-norm running buffers may
    // still move since forward passes happened
    Network init_net(cfg.model, cfg.seed), best_net(cfg.model, cfg.seed);
    load_checkpoint(init_net.params(), res.init_ckpt);
    load_checkpoint(best_net.params(), res.best_ckpt);
    for (const auto& [name, e] : init_net.params().entries())
        if (e.trainable) CHECK(best_net.params().at(name)->data == e.value->data);
}

TEST_CASE("inference preserves the source image size") {
    const auto out = temp_root() / "run_infer";
    fs::remove_all(out);
    auto cfg = tiny_run(out);
    cfg.epochs = 1;
    const auto res = train(cfg);

    // non-square, non-model-sized source image
    auto sample = generate_sample(900, 64);
    Image src = sample_image(sample);
    Image odd = resize_bilinear(src, 50, 38);
    const auto img_path = temp_root() / "src.ppm";
    write_ppm(img_path, odd);
    const auto map_path = temp_root() / "map.pgm";
    infer(cfg, res.best_ckpt, img_path, map_path);
    Image map = read_pnm(map_path);
    CHECK(map.width == 50);
    CHECK(map.height == 38);
    CHECK(map.channels == 1);
    for (double v : map.v) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // deterministic: running twice produces identical bytes
    const auto map2_path = temp_root() / "map2.pgm";
    infer(cfg, res.best_ckpt, img_path, map2_path);
    CHECK(slurp(map_path) == slurp(map2_path));

    // grayscale input is accepted too
    write_pgm(temp_root() / "src.pgm", sample_mask(sample));
    infer(cfg, res.best_ckpt, temp_root() / "src.pgm", map_path);

    CHECK_THROWS_AS(infer(cfg, res.best_ckpt, temp_root() / "missing.ppm", map_path),
                    IoError);
}

TEST_CASE("checkpoint/config mismatch is reported on eval") {
    const auto out = temp_root() / "run_mismatch";
    fs::remove_all(out);
    auto cfg = tiny_run(out);
    cfg.epochs = 1;
    const auto res = train(cfg);
    auto wider = cfg;
    wider.model.dec_width = 16;
    CHECK_THROWS_AS(eval_split(wider, res.best_ckpt, "val", temp_root() / "eval_bad"),
                    ValidationError);
}

TEST_CASE("the global branch overfits a small fixed set") {
    // desk-scale criterion uses the default model; the unit test exercises the
    // helper on the tiny model with a loose target
    auto cfg = tiny_run(temp_root() / "unused").model;
    const double lg = branch_overfit(cfg, 1, 8, 120, 0.25);
    CHECK(lg < 0.25);
}
