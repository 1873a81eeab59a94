#include "sodkit/runner.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sodkit {

namespace {

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad integer '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad number '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("config key " + key + ": bad boolean '" + v + "'");
}

std::array<int, 4> parse_int4(const std::string& key, const std::string& v) {
    std::array<int, 4> out{};
    std::stringstream ss(v);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= 4) throw ConfigError("config key " + key + ": expected 4 values");
        out[i++] = parse_int(key, tok);
    }
    if (i != 4) throw ConfigError("config key " + key + ": expected 4 values");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 1 || halve_every < 1) throw ConfigError("epochs and halve_every must be >= 1");
    if (lr_encoder < 0 || lr_branch < 0 || lr_decoder < 0)
        throw ConfigError("learning rates must be non-negative");
    if (train_size < batch || train_size > kTrainSeedCount)
        throw ConfigError("train_size must be in [batch, " + std::to_string(kTrainSeedCount) +
                          "]");
    if (val_size < 1 || val_size > kValSeedCount)
        throw ConfigError("val_size must be in [1, " + std::to_string(kValSeedCount) + "]");
}

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "side")
        cfg.model.side = parse_int(key, value);
    else if (key == "widths")
        cfg.model.widths = parse_int4(key, value);
    else if (key == "depths")
        cfg.model.depths = parse_int4(key, value);
    else if (key == "sr_factors")
        cfg.model.sr_factors = parse_int4(key, value);
    else if (key == "heads")
        cfg.model.heads = parse_int(key, value);
    else if (key == "patch_px")
        cfg.model.patch_px = parse_int(key, value);
    else if (key == "cg")
        cfg.model.cg = parse_int(key, value);
    else if (key == "dec_width")
        cfg.model.dec_width = parse_int(key, value);
    else if (key == "global_context")
        cfg.model.global_context = parse_bool(key, value);
    else if (key == "context_fusion")
        cfg.model.context_fusion = parse_bool(key, value);
    else if (key == "rescale_mode")
        cfg.model.rescale = rescale_mode_from_string(value);
    else if (key == "batch")
        cfg.batch = parse_int(key, value);
    else if (key == "epochs")
        cfg.epochs = parse_int(key, value);
    else if (key == "halve_every")
        cfg.halve_every = parse_int(key, value);
    else if (key == "lr_encoder")
        cfg.lr_encoder = parse_double(key, value);
    else if (key == "lr_branch")
        cfg.lr_branch = parse_double(key, value);
    else if (key == "lr_decoder")
        cfg.lr_decoder = parse_double(key, value);
    else if (key == "seed")
        cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "train_size")
        cfg.train_size = parse_int(key, value);
    else if (key == "val_size")
        cfg.val_size = parse_int(key, value);
    else if (key == "out_dir")
        cfg.out_dir = value;
    else
        throw ConfigError("unknown config key: " + key);
}

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.is_absolute()) return cfg.out_dir;
    if (const char* root = std::getenv("SODKIT_OUT_ROOT"))
        return std::filesystem::path(root) / cfg.out_dir;
    return cfg.out_dir;
}

Batch assemble_batch(const std::vector<Sample>& samples) {
    if (samples.empty()) throw ValidationError("assemble_batch: empty batch");
    const int b = static_cast<int>(samples.size());
    const int s = samples[0].side;
    Batch batch;
    batch.img = make_value(Shape{b, 3, s, s});
    batch.mask_shape = Shape{b, 1, s, s};
    batch.mask.resize(static_cast<size_t>(b) * s * s);
    const size_t plane = static_cast<size_t>(s) * s;
    for (int i = 0; i < b; ++i) {
        if (samples[i].side != s) throw DimensionError("assemble_batch: mixed sample sides");
        std::copy(samples[i].image.begin(), samples[i].image.end(),
                  batch.img->data.begin() + static_cast<size_t>(i) * 3 * plane);
        std::copy(samples[i].mask.begin(), samples[i].mask.end(),
                  batch.mask.begin() + static_cast<size_t>(i) * plane);
    }
    return batch;
}

std::vector<int> epoch_order(std::uint64_t run_seed, int epoch, int n) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(run_seed * 0x100000001B3ull + static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    return order;
}

std::uint64_t augment_seed(std::uint64_t run_seed, int epoch, int step, int i) {
    return run_seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch) * 1000003ull +
           static_cast<std::uint64_t>(step) * 1009ull + static_cast<std::uint64_t>(i);
}

Value run_loss(Network& net, const Batch& batch, bool train, LossBreakdown* bd) {
    auto out = net.forward(batch.img, train);
    Value lg;
    if (out.pg) {
        Shape gg_shape;
        auto gg = patchwise_gt(batch.mask_shape, batch.mask, net.config().patch_px, gg_shape);
        lg = global_loss(out.pg, gg);
    } else {
        lg = scalar_value(0.0);
    }
    auto ll = decoder_loss(out, batch.mask, bd);
    auto total = total_loss(lg, ll);
    if (bd) {
        bd->lg = lg->data[0];
        bd->total = total->data[0];
    }
    return total;
}

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct SplitPredictions {
    // per image, full-resolution planes per stage (index 0 = stage 1)
    std::vector<std::array<std::vector<double>, 4>> p1, p2;
};

SplitPredictions predict_split(Network& net, const std::vector<Sample>& samples, int batch) {
    SplitPredictions out;
    const int n = static_cast<int>(samples.size());
    for (int start = 0; start < n; start += batch) {
        const int count = std::min(batch, n - start);
        Batch b = assemble_batch(
            {samples.begin() + start, samples.begin() + start + count});
        auto net_out = net.forward(b.img, /*train=*/false);
        const size_t plane =
            static_cast<size_t>(samples[0].side) * samples[0].side;
        for (int i = 0; i < count; ++i) {
            std::array<std::vector<double>, 4> p1s, p2s;
            for (int s = 0; s < 4; ++s) {
                const auto& st = net_out.stages[s];
                p1s[s].assign(st.p1_full->data.begin() + i * plane,
                              st.p1_full->data.begin() + (i + 1) * plane);
                p2s[s].assign(st.p2_full->data.begin() + i * plane,
                              st.p2_full->data.begin() + (i + 1) * plane);
            }
            out.p1.push_back(std::move(p1s));
            out.p2.push_back(std::move(p2s));
        }
    }
    return out;
}

double plane_mae(const std::vector<double>& pred, const std::vector<double>& gt) {
    double s = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
    return s / static_cast<double>(pred.size());
}

std::vector<Sample> make_split(const RunConfig& cfg, const std::string& split) {
    std::uint64_t base;
    int count;
    if (split == "train") {
        base = kTrainSeedBase;
        count = cfg.train_size;
    } else if (split == "val") {
        base = kValSeedBase;
        count = cfg.val_size;
    } else {
        throw ConfigError("unknown split: " + split + " (want train|val)");
    }
    std::vector<Sample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i)
        out.push_back(generate_sample(base + static_cast<std::uint64_t>(i), cfg.model.side));
    return out;
}

}  // namespace

TrainResult train(const RunConfig& cfg) {
    cfg.validate();
    const auto out_dir = resolve_out_dir(cfg);
    std::filesystem::create_directories(out_dir);

    Network net(cfg.model, cfg.seed);
    TrainResult res;
    res.init_ckpt = out_dir / "init.ckpt";
    res.best_ckpt = out_dir / "best.ckpt";
    res.loss_csv = out_dir / "loss.csv";
    res.val_csv = out_dir / "val.csv";
    save_checkpoint(net.params(), res.init_ckpt);

    const auto train_set = make_split(cfg, "train");
    const auto val_set = make_split(cfg, "val");

    std::ofstream loss_out(res.loss_csv);
    loss_out << "epoch,step,lg,l1_s1,l1_s2,l1_s3,l1_s4,l2_s1,l2_s2,l2_s3,l2_s4,ll,total\n";
    std::ofstream val_out(res.val_csv);
    val_out << "epoch,lr_scale,mae_p1_s1,mae_p1_s2,mae_p1_s3,mae_p1_s4,"
               "mae_p2_s1,mae_p2_s2,mae_p2_s3,mae_p2_s4\n";

    AdamOptimizer opt;
    double best = std::numeric_limits<double>::infinity();
    const int steps_per_epoch = cfg.train_size / cfg.batch;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr_scale = std::pow(0.5, (epoch - 1) / cfg.halve_every);
        const std::vector<AdamOptimizer::Group> groups{
            {"encoder.", cfg.lr_encoder * lr_scale},
            {"glc.", cfg.lr_branch * lr_scale},
            {"decoder.", cfg.lr_decoder * lr_scale}};
        const auto order = epoch_order(cfg.seed, epoch, cfg.train_size);
        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<Sample> picked;
            picked.reserve(cfg.batch);
            for (int i = 0; i < cfg.batch; ++i)
                picked.push_back(augment(train_set[order[step * cfg.batch + i]],
                                         augment_seed(cfg.seed, epoch, step, i)));
            Batch batch = assemble_batch(picked);
            LossBreakdown bd;
            Value total;
            try {
                total = run_loss(net, batch, /*train=*/true, &bd);
            } catch (const NumericalError& e) {
                std::string seeds;
                for (const auto& s : picked) seeds += " " + std::to_string(s.seed);
                throw NumericalError(std::string(e.what()) + " at epoch " +
                                     std::to_string(epoch) + " step " + std::to_string(step) +
                                     ", batch sample seeds:" + seeds);
            }
            net.params().zero_grads();
            backward(total);
            opt.step(net.params(), groups);
            loss_out << epoch << "," << step << "," << g17(bd.lg);
            for (double v : bd.stage_p1) loss_out << "," << g17(v);
            for (double v : bd.stage_p2) loss_out << "," << g17(v);
            loss_out << "," << g17(bd.ll) << "," << g17(bd.total) << "\n";
        }

        const auto preds = predict_split(net, val_set, cfg.batch);
        std::array<double, 4> m1{}, m2{};
        for (size_t i = 0; i < val_set.size(); ++i)
            for (int s = 0; s < 4; ++s) {
                m1[s] += plane_mae(preds.p1[i][s], val_set[i].mask);
                m2[s] += plane_mae(preds.p2[i][s], val_set[i].mask);
            }
        for (int s = 0; s < 4; ++s) {
            m1[s] /= static_cast<double>(val_set.size());
            m2[s] /= static_cast<double>(val_set.size());
        }
        val_out << epoch << "," << g17(lr_scale);
        for (double v : m1) val_out << "," << g17(v);
        for (double v : m2) val_out << "," << g17(v);
        val_out << "\n";
        if (m2[0] < best) {
            best = m2[0];
            res.best_epoch = epoch;
            res.best_val_mae = best;
            save_checkpoint(net.params(), res.best_ckpt);
        }
    }

    nlohmann::json meta{{"best_epoch", res.best_epoch},
                        {"best_val_mae", g17(res.best_val_mae)}};
    std::ofstream(out_dir / "best.json") << meta.dump(2) << "\n";
    return res;
}

MetricReport eval_split(const RunConfig& cfg, const std::filesystem::path& ckpt,
                        const std::string& split, const std::filesystem::path& out_dir) {
    cfg.validate();
    Network net(cfg.model, cfg.seed);
    load_checkpoint(net.params(), ckpt);
    const auto samples = make_split(cfg, split);
    const auto preds = predict_split(net, samples, cfg.batch);

    std::filesystem::create_directories(out_dir / "pred");
    std::vector<MapPair> pairs;
    for (size_t i = 0; i < samples.size(); ++i) {
        const int side = samples[i].side;
        Image img{side, side, 1, preds.p2[i][0]};
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.pgm", i);
        write_pgm(out_dir / "pred" / name, img);
        pairs.push_back(MapPair{side, side, preds.p2[i][0], samples[i].mask});
    }
    MetricReport report = evaluate_pairs(pairs);
    write_report_csv(report, out_dir);
    return report;
}

void infer(const RunConfig& cfg, const std::filesystem::path& ckpt,
           const std::filesystem::path& image_path, const std::filesystem::path& out_path) {
    cfg.validate();
    Network net(cfg.model, cfg.seed);
    load_checkpoint(net.params(), ckpt);
    Image src = read_pnm(image_path);
    Image rgb = src;
    if (rgb.channels == 1) {
        rgb.channels = 3;
        rgb.v.resize(src.v.size() * 3);
        for (int c = 0; c < 3; ++c)
            std::copy(src.v.begin(), src.v.end(), rgb.v.begin() + c * src.v.size());
    }
    const int side = cfg.model.side;
    Image resized = resize_bilinear(rgb, side, side);
    auto img = make_value(Shape{1, 3, side, side}, resized.v);
    auto out = net.forward(img, /*train=*/false);
    Image map{side, side, 1, out.stages[0].p2_full->data};
    Image back = resize_bilinear(map, src.width, src.height);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    write_pgm(out_path, back);
}

double branch_overfit(const ModelConfig& model, std::uint64_t seed, int nsamples,
                      int max_steps, double target) {
    ModelConfig cfg = model;
    cfg.global_context = true;
    cfg.validate();
    Network net(cfg, seed);
    std::vector<Sample> samples;
    for (int i = 0; i < nsamples; ++i)
        samples.push_back(generate_sample(static_cast<std::uint64_t>(i), cfg.side));
    std::vector<Batch> batches;
    const int bsz = std::min(nsamples, 10);
    std::vector<std::vector<double>> ggs;
    for (int start = 0; start < nsamples; start += bsz) {
        const int count = std::min(bsz, nsamples - start);
        batches.push_back(
            assemble_batch({samples.begin() + start, samples.begin() + start + count}));
        Shape gshape;
        ggs.push_back(patchwise_gt(batches.back().mask_shape, batches.back().mask,
                                   cfg.patch_px, gshape));
    }
    AdamOptimizer opt;
    const std::vector<AdamOptimizer::Group> groups{
        {"encoder.", 1e-3}, {"glc.", 1e-3}, {"decoder.", 0.0}};
    auto mean_lg = [&]() {
        double acc = 0.0;
        long long n = 0;
        for (size_t b = 0; b < batches.size(); ++b) {
            auto pg = net.forward_global(batches[b].img, /*train=*/false);
            const long long cnt = batches[b].mask_shape[0];
            acc += global_loss(pg, ggs[b])->data[0] * static_cast<double>(cnt);
            n += cnt;
        }
        return acc / static_cast<double>(n);
    };
    double current = mean_lg();
    for (int step = 0; step < max_steps && current >= target; ++step) {
        const size_t b = step % batches.size();
        auto pg = net.forward_global(batches[b].img, /*train=*/true);
        auto lg = global_loss(pg, ggs[b]);
        net.params().zero_grads();
        backward(lg);
        opt.step(net.params(), groups);
        if ((step + 1) % 10 == 0 || step + 1 == max_steps) current = mean_lg();
    }
    return current;
}

}  // namespace sodkit
