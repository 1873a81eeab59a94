#include "sodkit/gradcheck.hpp"
#include "sodkit/losses.hpp"

namespace sodkit {

namespace {

// Random values kept away from activation kinks so central differences stay
// clean; grad_check retries with a fresh draw on failure anyway.
Value random_input(Shape shape, Rng& rng) {
    auto v = make_value(std::move(shape));
    for (auto& d : v->data) {
        d = rng.normal();
        if (std::abs(d) < 0.05) d += d < 0 ? -0.05 : 0.05;
    }
    return v;
}

// Reduce an arbitrary tensor to a scalar with fixed random weights so every
// output coordinate influences the probe.
Value probe(const Value& y, std::uint64_t seed) {
    Rng rng(seed);
    auto w = make_value(y->shape);
    for (auto& d : w->data) d = rng.uniform(-1.0, 1.0);
    return sum_all(mul(y, w));
}

std::vector<Value> trainable(ParamStore& store) {
    std::vector<Value> out;
    for (auto& [name, e] : store.entries())
        if (e.trainable) out.push_back(e.value);
    return out;
}

struct Case {
    std::string name;
    double tol;
    int seeds_override = -1;  // -1: use the caller's count
    // builds inputs and a rebuildable scalar function for one seed
    std::function<std::pair<std::vector<Value>, ScalarFn>(std::uint64_t)> build;
    long long max_coords = -1;
};

double run_case_once(const Case& c, std::uint64_t seed) {
    auto [inputs, fn] = c.build(seed);
    return grad_check(fn, inputs, 1e-5, c.max_coords, seed).max_rel_err;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.side = 32;
    cfg.widths = {4, 4, 8, 8};
    cfg.depths = {1, 1, 1, 1};
    cfg.sr_factors = {4, 2, 1, 1};
    cfg.heads = 2;
    cfg.cg = 16;
    cfg.dec_width = 8;
    return cfg;
}

}  // namespace

std::vector<SuiteEntry> run_gradient_suite(int seeds) {
    std::vector<Case> cases;

    cases.push_back({"matmul", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto a = random_input({3, 4}, rng);
                         auto b = random_input({4, 3}, rng);
                         ScalarFn fn = [s](const std::vector<Value>& in) {
                             return probe(matmul(in[0], in[1]), s * 31 + 7);
                         };
                         return std::pair{std::vector<Value>{a, b}, fn};
                     }});

    cases.push_back({"conv2d", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_input({2, 3, 5, 5}, rng);
                         auto w = random_input({4, 3, 3, 3}, rng);
                         auto b = random_input({4}, rng);
                         ScalarFn fn = [s](const std::vector<Value>& in) {
                             return probe(conv2d(in[0], in[1], in[2], 1, 1), s * 31 + 7);
                         };
                         return std::pair{std::vector<Value>{x, w, b}, fn};
                     }});

    cases.push_back({"batch_norm", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_input({4, 3, 3, 3}, rng);
                         auto g = random_input({3}, rng);
                         auto b = random_input({3}, rng);
                         auto buffers = std::make_shared<BatchNormBuffers>();
                         buffers->running_mean = make_value({3});
                         buffers->running_var = make_value({3});
                         std::fill(buffers->running_var->data.begin(),
                                   buffers->running_var->data.end(), 1.0);
                         ScalarFn fn = [s, buffers](const std::vector<Value>& in) {
                             return probe(batch_norm(in[0], in[1], in[2], *buffers, true),
                                          s * 31 + 7);
                         };
                         return std::pair{std::vector<Value>{x, g, b}, fn};
                     }});

    cases.push_back({"layer_norm", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_input({2, 5, 8}, rng);
                         auto g = random_input({8}, rng);
                         auto b = random_input({8}, rng);
                         ScalarFn fn = [s](const std::vector<Value>& in) {
                             return probe(layer_norm(in[0], in[1], in[2]), s * 31 + 7);
                         };
                         return std::pair{std::vector<Value>{x, g, b}, fn};
                     }});

    for (auto [kind, kname] : {std::pair{Act::Relu, "activation_relu"},
                               std::pair{Act::LeakyRelu, "activation_leaky_relu"},
                               std::pair{Act::Gelu, "activation_gelu"},
                               std::pair{Act::Sigmoid, "activation_sigmoid"}}) {
        cases.push_back({kname, 1e-4, -1, [kind](std::uint64_t s) {
                             Rng rng(s);
                             auto x = random_input({4, 7}, rng);
                             ScalarFn fn = [s, kind](const std::vector<Value>& in) {
                                 return probe(activation(in[0], kind), s * 31 + 7);
                             };
                             return std::pair{std::vector<Value>{x}, fn};
                         }});
    }

    cases.push_back({"softmax", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto x = random_input({3, 6}, rng);
                         ScalarFn fn = [s](const std::vector<Value>& in) {
                             return probe(softmax_lastdim(in[0]), s * 31 + 7);
                         };
                         return std::pair{std::vector<Value>{x}, fn};
                     }});

    cases.push_back({"attention", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto store = std::make_shared<ParamStore>();
                         auto attn = std::make_shared<MultiHeadAttention>(
                             *store, "attn", AttentionConfig{8, 2, 1}, rng);
                         auto q = random_input({2, 5, 8}, rng);
                         auto kv = random_input({2, 3, 8}, rng);
                         std::vector<Value> inputs{q, kv};
                         for (auto& p : trainable(*store)) inputs.push_back(p);
                         ScalarFn fn = [s, attn, store](const std::vector<Value>& in) {
                             return probe(attn->forward(in[0], in[1]), s * 31 + 7);
                         };
                         return std::pair{inputs, fn};
                     },
                     6});

    cases.push_back({"sr_attention", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto store = std::make_shared<ParamStore>();
                         auto attn = std::make_shared<MultiHeadAttention>(
                             *store, "attn", AttentionConfig{8, 2, 2}, rng);
                         auto reduce =
                             std::make_shared<SpatialReduce>(*store, "reduce", 8, 2, rng);
                         auto x = random_input({2, 16, 8}, rng);
                         std::vector<Value> inputs{x};
                         for (auto& p : trainable(*store)) inputs.push_back(p);
                         ScalarFn fn = [s, attn, reduce, store](const std::vector<Value>& in) {
                             auto kv = reduce->forward(in[0], 4, 4);
                             return probe(attn->forward(in[0], kv), s * 31 + 7);
                         };
                         return std::pair{inputs, fn};
                     },
                     6});

    cases.push_back({"transformer_block", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto store = std::make_shared<ParamStore>();
                         auto blk = std::make_shared<TransformerBlock>(
                             *store, "blk", AttentionConfig{8, 2, 2}, true, rng);
                         auto x = random_input({1, 16, 8}, rng);
                         std::vector<Value> inputs{x};
                         for (auto& p : trainable(*store)) inputs.push_back(p);
                         ScalarFn fn = [s, blk, store](const std::vector<Value>& in) {
                             return probe(blk->forward(in[0], 4, 4), s * 31 + 7);
                         };
                         return std::pair{inputs, fn};
                     },
                     4});

    cases.push_back({"crm_stage", 1e-4, -1, [](std::uint64_t s) {
                         Rng rng(s);
                         auto cfg = tiny_config();
                         auto store = std::make_shared<ParamStore>();
                         auto stage = std::make_shared<CrmStage>(*store, "decoder.stage2", cfg,
                                                                 2, true, rng);
                         auto f_enc = random_input({1, cfg.widths[1], 4, 4}, rng);
                         auto prev = random_input({1, cfg.dec_width, 2, 2}, rng);
                         auto fg = random_input({1, cfg.cg, 2, 2}, rng);
                         std::vector<Value> inputs{f_enc, prev, fg};
                         for (auto& p : trainable(*store)) inputs.push_back(p);
                         ScalarFn fn = [s, stage, store](const std::vector<Value>& in) {
                             auto out = stage->forward(in[0], in[1], in[2], true);
                             return add(probe(out.p1, s * 31 + 7), probe(out.p2, s * 31 + 9));
                         };
                         return std::pair{inputs, fn};
                     },
                     3});

    cases.push_back({"full_network", 1e-3, 5, [](std::uint64_t s) {
                         Rng rng(s);
                         auto cfg = tiny_config();
                         auto net = std::make_shared<Network>(cfg, s);
                         auto img = make_value({2, 3, cfg.side, cfg.side});
                         for (auto& d : img->data) d = rng.uniform();
                         auto mask = std::make_shared<std::vector<double>>(
                             static_cast<size_t>(2) * cfg.side * cfg.side);
                         for (auto& m : *mask) m = rng.uniform() < 0.3 ? 1.0 : 0.0;
                         Shape gshape;
                         auto gg = std::make_shared<std::vector<double>>(patchwise_gt(
                             {2, 1, cfg.side, cfg.side}, *mask, cfg.patch_px, gshape));
                         std::vector<Value> inputs{img};
                         for (auto& p : trainable(net->params())) inputs.push_back(p);
                         ScalarFn fn = [net, mask, gg](const std::vector<Value>& in) {
                             auto out = net->forward(in[0], true);
                             auto lg = global_loss(out.pg, *gg);
                             auto ll = decoder_loss(out, *mask);
                             return total_loss(lg, ll);
                         };
                         return std::pair{inputs, fn};
                     },
                     1});

    std::vector<SuiteEntry> report;
    for (const auto& c : cases) {
        const int n = c.seeds_override > 0 ? c.seeds_override : seeds;
        double worst = 0.0;
        for (int s = 1; s <= n; ++s) {
            double err = run_case_once(c, static_cast<std::uint64_t>(s));
            if (err >= c.tol)  // non-differentiable sample point: resample once
                err = std::min(err, run_case_once(c, static_cast<std::uint64_t>(s) + 1000));
            worst = std::max(worst, err);
        }
        report.push_back({c.name, worst, c.tol, worst < c.tol});
    }
    return report;
}

}  // namespace sodkit
