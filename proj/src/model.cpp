#include "sodkit/model.hpp"

namespace sodkit {

RescaleMode rescale_mode_from_string(const std::string& s) {
    if (s == "pixel_shuffle") return RescaleMode::PixelShuffle;
    if (s == "bilinear") return RescaleMode::Bilinear;
    throw ConfigError("unknown rescale_mode: " + s);
}

std::string to_string(RescaleMode m) {
    return m == RescaleMode::PixelShuffle ? "pixel_shuffle" : "bilinear";
}

void ModelConfig::validate() const {
    if (side % 32 != 0) throw ConfigError("input side must be divisible by 32");
    if (side % patch_px != 0) throw ConfigError("patch side must divide input side");
    if (heads < 1) throw ConfigError("heads must be positive");
    for (int s = 1; s <= 4; ++s) {
        const int g = grid(s);
        if (g < 1) throw ConfigError("input side too small for a 4-stage pyramid");
        if (static_cast<long long>(g) * g > max_tokens)
            throw ConfigError("stage " + std::to_string(s) + " token count " +
                              std::to_string(g * g) + " exceeds max_tokens bound " +
                              std::to_string(max_tokens));
        if (widths[s - 1] % heads != 0)
            throw ConfigError("stage width must be divisible by heads");
        if (g % sr_factors[s - 1] != 0)
            throw ConfigError("sr factor must divide the stage grid");
    }
    if (dec_width % 4 != 0) throw ConfigError("dec_width must be divisible by 4");
    const int p = patch_grid();
    for (int s = 1; s <= 4; ++s) {
        const int g = grid(s);
        if (rescale == RescaleMode::PixelShuffle && fuse_context() && g > p &&
            cg % ((g / p) * (g / p)) != 0)
            throw ConfigError("cg must be divisible by the shuffle factor squared");
        if (rescale == RescaleMode::PixelShuffle && global_context && p > g &&
            widths[s - 1] % ((p / g) * (p / g)) != 0)
            throw ConfigError("stage " + std::to_string(s) +
                              " width cannot be shuffled up to the patch grid");
    }
}

Value rescale_spatial(const Value& x, int target, RescaleMode mode) {
    const int cur = x->shape[3];
    if (x->shape[2] != cur) throw DimensionError("rescale_spatial: expected a square grid");
    if (cur == target) return x;
    if (mode == RescaleMode::PixelShuffle) {
        if (cur > target) {
            if (cur % target != 0)
                throw DimensionError("rescale_spatial: non-integer downscale factor");
            return pixel_unshuffle(x, cur / target);
        }
        if (target % cur != 0)
            throw DimensionError("rescale_spatial: non-integer upscale factor");
        return pixel_shuffle(x, target / cur);
    }
    return bilinear_resize(x, target, target);
}

int rescale_channels(int c, int cur, int target, RescaleMode mode) {
    if (mode == RescaleMode::Bilinear || cur == target) return c;
    if (cur > target) return c * (cur / target) * (cur / target);
    return c / ((target / cur) * (target / cur));
}

Value tokens_to_grid(const Value& t, int g) {
    const int b = t->shape[0], c = t->shape[2];
    return permute(reshape(t, {b, g, g, c}), {0, 3, 1, 2});
}

Value grid_to_tokens(const Value& x) {
    const int b = x->shape[0], c = x->shape[1], g = x->shape[2];
    return reshape(permute(x, {0, 2, 3, 1}), {b, g * x->shape[3], c});
}

// ---- encoder ----

Encoder::Encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    int in_ch = 3;
    for (int s = 1; s <= 4; ++s) {
        const int merge = s == 1 ? 4 : 2;
        const int g = cfg.grid(s);
        const int width = cfg.widths[s - 1];
        const std::string prefix = "encoder.stage" + std::to_string(s);
        Stage st;
        st.embed = LinearLayer(store, prefix + ".embed", in_ch * merge * merge, width, rng);
        st.pos = store.param(prefix + ".pos", {1, g * g, width}, rng, 0.02);
        AttentionConfig acfg{width, cfg.heads, cfg.sr_factors[s - 1]};
        for (int d = 0; d < cfg.depths[s - 1]; ++d)
            st.blocks.emplace_back(store, prefix + ".block" + std::to_string(d), acfg,
                                   /*reduced=*/true, rng);
        stages_[s - 1] = std::move(st);
        in_ch = width;
    }
}

std::array<Value, 4> Encoder::forward(const Value& img) const {
    if (img->shape.size() != 4 || img->shape[1] != 3 || img->shape[2] != cfg_.side ||
        img->shape[3] != cfg_.side)
        throw DimensionError("encoder: expected [B,3," + std::to_string(cfg_.side) + "," +
                             std::to_string(cfg_.side) + "], got " + shape_str(img->shape));
    std::array<Value, 4> out;
    Value cur = img;
    for (int s = 1; s <= 4; ++s) {
        const Stage& st = stages_[s - 1];
        const int merge = s == 1 ? 4 : 2;
        const int g = cfg_.grid(s);
        auto t = grid_to_tokens(pixel_unshuffle(cur, merge));
        t = add_broadcast0(st.embed(t), st.pos);
        for (const auto& blk : st.blocks) t = blk.forward(t, g, g);
        cur = tokens_to_grid(t, g);
        out[s - 1] = cur;
    }
    return out;
}

// ---- global-context branch ----

namespace {

int fused_channels(const ModelConfig& cfg) {
    int total = 0;
    const int p = cfg.patch_grid();
    for (int s = 1; s <= 4; ++s)
        total += rescale_channels(cfg.widths[s - 1], cfg.grid(s), p, cfg.rescale);
    return total;
}

}  // namespace

GlobalBranch::GlobalBranch(ParamStore& store, const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      fuse1_(store, "glc.fuse1", fused_channels(cfg), cfg.cg, 3, rng),
      fuse2_(store, "glc.fuse2", cfg.cg, cfg.cg, 3, rng),
      tf_(store, "glc.tf", AttentionConfig{cfg.cg, cfg.heads, 1}, /*reduced=*/false, rng),
      head_(store, "glc.head", cfg.cg, 1, rng) {}

Value GlobalBranch::fuse_encoder_features(const std::array<Value, 4>& pyr, bool train) {
    const int p = cfg_.patch_grid();
    std::vector<Value> parts;
    for (int s = 1; s <= 4; ++s) parts.push_back(rescale_spatial(pyr[s - 1], p, cfg_.rescale));
    auto x = concat_axis1(parts);
    return fuse2_.forward(fuse1_.forward(x, train), train);
}

GlobalOut GlobalBranch::predict_global(const Value& f_fuse) {
    const int p = cfg_.patch_grid();
    auto t = tf_.forward(grid_to_tokens(f_fuse), p, p);
    GlobalOut out;
    out.fg = tokens_to_grid(t, p);
    out.pg = reshape(sigmoid(head_(t)), {f_fuse->shape[0], 1, p, p});
    return out;
}

// ---- CRM ----

Value uncertainty_map(const Value& p1) { return mul(p1, affine(p1, -1.0, 1.0)); }

CrmStage::CrmStage(ParamStore& store, const std::string& name, const ModelConfig& cfg,
                   int stage, bool has_prev, Rng& rng)
    : cfg_(cfg),
      stage_(stage),
      grid_(cfg.grid(stage)),
      r_stage_(cfg.stage_scale(stage)),
      out_ch_(cfg.rescale == RescaleMode::PixelShuffle ? r_stage_ * r_stage_ : 1),
      has_prev_(has_prev) {
    const int d = cfg.dec_width;
    int in_ch = cfg.widths[stage - 1];
    if (has_prev) {
        const int tc = rescale_channels(d, grid_ / 2, grid_, cfg.rescale);
        transport_ = ConvLayer(store, name + ".transport", tc, d, 1, rng);
        in_ch += d;
    }
    if (cfg.fuse_context()) {
        const int cc = rescale_channels(cfg.cg, cfg.patch_grid(), grid_, cfg.rescale);
        ctx_w_ = store.param(name + ".ctx.w", {cc, cc, 1, 1}, rng, 0.0);
        ctx_b_ = store.param_const(name + ".ctx.b", {cc}, 0.0);
        in_ch += cc;
    }
    f1a_ = ConvBNAct(store, name + ".f1a", in_ch, d, 3, rng);
    f1b_ = ConvBNAct(store, name + ".f1b", d, d, 3, rng);
    p1_head_ = ConvLayer(store, name + ".p1_head", d, out_ch_, 1, rng);
    f2_ = ConvBNAct(store, name + ".f2", out_ch_, d, 3, rng);
    tf_ = TransformerBlock(store, name + ".tf", AttentionConfig{d, cfg.heads, 1},
                           /*reduced=*/false, rng);
    f3_ = ConvBNAct(store, name + ".f3", d, d, 3, rng);
    p2_head_ = ConvLayer(store, name + ".p2_head", d, out_ch_, 1, rng);
}

CrmStageOut CrmStage::forward(const Value& f_enc, const Value& prev_feat, const Value& fg,
                              bool train) {
    std::vector<Value> parts{f_enc};
    if (has_prev_) {
        if (!prev_feat) throw DimensionError("crm: missing previous-stage feature");
        parts.push_back(transport_(rescale_spatial(prev_feat, grid_, cfg_.rescale)));
    }
    if (cfg_.fuse_context()) {
        if (!fg) throw DimensionError("crm: missing global-context feature");
        parts.push_back(conv2d(rescale_spatial(fg, grid_, cfg_.rescale), ctx_w_, ctx_b_, 1, 0));
    }
    auto fused = f1b_.forward(f1a_.forward(concat_axis1(parts), train), train);
    CrmStageOut out;
    out.p1 = sigmoid(p1_head_(fused));
    auto gate = f2_.forward(uncertainty_map(out.p1), train);
    auto m = add(mul(fused, gate), fused);
    auto refined = tokens_to_grid(tf_.forward(grid_to_tokens(m), grid_, grid_), grid_);
    out.p2 = sigmoid(p2_head_(f3_.forward(refined, train)));
    out.feat = refined;
    return out;
}

// ---- full network ----

Network::Network(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    encoder_.emplace(store_, cfg_, rng);
    if (cfg_.global_context) branch_.emplace(store_, cfg_, rng);
    for (int s = 1; s <= 4; ++s)
        crm_.emplace_back(store_, "decoder.stage" + std::to_string(s), cfg_, s,
                          /*has_prev=*/s != 4, rng);
}

NetworkOutput Network::forward(const Value& img, bool train) {
    auto pyr = encoder_->forward(img);
    Value fg;
    NetworkOutput out;
    if (branch_) {
        auto g = branch_->forward(pyr, train);
        out.pg = g.pg;
        fg = g.fg;
    }
    std::array<CrmStageOut, 4> souts;
    Value prev;
    for (int s = 4; s >= 1; --s) {
        souts[s - 1] = crm_[s - 1].forward(pyr[s - 1], prev, fg, train);
        prev = souts[s - 1].feat;
    }
    for (int s = 1; s <= 4; ++s) {
        StageOut so;
        so.index = s;
        so.scale = cfg_.stage_scale(s);
        so.p1 = souts[s - 1].p1;
        so.p2 = souts[s - 1].p2;
        if (cfg_.rescale == RescaleMode::PixelShuffle) {
            so.p1_full = pixel_shuffle(so.p1, so.scale);
            so.p2_full = pixel_shuffle(so.p2, so.scale);
        } else {
            so.p1_full = bilinear_resize(so.p1, cfg_.side, cfg_.side);
            so.p2_full = bilinear_resize(so.p2, cfg_.side, cfg_.side);
        }
        out.stages.push_back(std::move(so));
    }
    return out;
}

Value Network::forward_global(const Value& img, bool train) {
    if (!branch_) throw ConfigError("forward_global: global-context branch is disabled");
    auto pyr = encoder_->forward(img);
    return branch_->forward(pyr, train).pg;
}

}  // namespace sodkit
