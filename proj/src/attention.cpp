#include "sodkit/attention.hpp"

namespace sodkit {

Value MultiHeadAttention::split_heads(const Value& x) const {
    const int b = x->shape[0], n = x->shape[1];
    const int h = cfg_.heads, dh = cfg_.head_dim();
    auto y = reshape(x, {b, n, h, dh});
    y = permute(y, {0, 2, 1, 3});  // [B,h,N,dh]
    return reshape(y, {b * h, n, dh});
}

Value MultiHeadAttention::merge_heads(const Value& x, int b) const {
    const int h = cfg_.heads, dh = cfg_.head_dim();
    const int n = x->shape[1];
    auto y = reshape(x, {b, h, n, dh});
    y = permute(y, {0, 2, 1, 3});
    return reshape(y, {b, n, h * dh});
}

Value MultiHeadAttention::forward(const Value& q_in, const Value& kv_in, Value* scores) const {
    if (q_in->shape.size() != 3 || kv_in->shape.size() != 3 ||
        q_in->shape[0] != kv_in->shape[0] || q_in->shape[2] != cfg_.dim ||
        kv_in->shape[2] != cfg_.dim)
        throw DimensionError("attention: bad token shapes " + shape_str(q_in->shape) + " / " +
                             shape_str(kv_in->shape));
    const int b = q_in->shape[0];
    auto q = split_heads(q_proj_(q_in));
    auto k = split_heads(k_proj_(kv_in));
    auto v = split_heads(v_proj_(kv_in));
    auto logits = affine(bmm(q, k, /*transpose_b=*/true),
                         1.0 / std::sqrt(static_cast<double>(cfg_.head_dim())), 0.0);
    auto att = softmax_lastdim(logits);
    if (scores) *scores = att;
    auto ctx = merge_heads(bmm(att, v), b);
    return out_proj_(ctx);
}

Value SpatialReduce::forward(const Value& x, int gh, int gw) const {
    if (x->shape.size() != 3 || x->shape[1] != gh * gw)
        throw DimensionError("spatial_reduce: token count " + shape_str(x->shape) +
                             " does not match grid " + std::to_string(gh) + "x" +
                             std::to_string(gw));
    if (gh % r_ != 0 || gw % r_ != 0)
        throw DimensionError("spatial_reduce: r=" + std::to_string(r_) +
                             " does not divide grid " + std::to_string(gh) + "x" +
                             std::to_string(gw));
    const int b = x->shape[0], c = x->shape[2];
    Value t = x;
    if (r_ > 1) {
        t = permute(reshape(x, {b, gh, gw, c}), {0, 3, 1, 2});  // [B,C,gh,gw]
        t = pixel_unshuffle(t, r_);                             // [B,C*r^2,gh/r,gw/r]
        t = permute(t, {0, 2, 3, 1});
        t = reshape(t, {b, (gh / r_) * (gw / r_), c * r_ * r_});
    }
    return ln_(mlp_(t));
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name,
                                   const AttentionConfig& cfg, bool reduced, Rng& rng)
    : ln1_(store, name + ".ln1", cfg.dim),
      ln2_(store, name + ".ln2", cfg.dim),
      attn_(store, name + ".attn", cfg, rng),
      reduced_(reduced),
      mlp_fc1_(store, name + ".mlp.fc1", cfg.dim, 4 * cfg.dim, rng),
      mlp_fc2_(store, name + ".mlp.fc2", 4 * cfg.dim, cfg.dim, rng) {
    if (reduced) reduce_ = SpatialReduce(store, name + ".reduce", cfg.dim, cfg.reduction, rng);
}

Value TransformerBlock::forward(const Value& x, int gh, int gw, Value* scores) const {
    auto h = ln1_(x);
    auto kv = reduced_ ? reduce_.forward(h, gh, gw) : h;
    auto x1 = add(x, attn_.forward(h, kv, scores));
    auto m = mlp_fc2_(activation(mlp_fc1_(ln2_(x1)), Act::Gelu));
    return add(x1, m);
}

}  // namespace sodkit
