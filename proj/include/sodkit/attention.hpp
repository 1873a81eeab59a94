#pragma once

#include "sodkit/nn.hpp"
#include "sodkit/pixel_shuffle.hpp"

namespace sodkit {

struct AttentionConfig {
    int dim = 32;
    int heads = 2;
    int reduction = 1;  // spatial reduction factor for the K/V path; 1 = full

    int head_dim() const {
        if (dim % heads != 0)
            throw ConfigError("attention: dim " + std::to_string(dim) +
                              " not divisible by heads " + std::to_string(heads));
        return dim / heads;
    }
};

// Scaled dot-product attention over token sequences, multi-head, with a final
// linear projection. q:[B,N,C], kv:[B,M,C]. When `scores` is non-null it
// receives the post-softmax weight tensor [B*heads, N, M].
class MultiHeadAttention {
  public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore& store, const std::string& name, const AttentionConfig& cfg,
                       Rng& rng)
        : cfg_(cfg),
          q_proj_(store, name + ".q", cfg.dim, cfg.dim, rng),
          k_proj_(store, name + ".k", cfg.dim, cfg.dim, rng),
          v_proj_(store, name + ".v", cfg.dim, cfg.dim, rng),
          out_proj_(store, name + ".out", cfg.dim, cfg.dim, rng) {}

    Value forward(const Value& q_in, const Value& kv_in, Value* scores = nullptr) const;

    const AttentionConfig& config() const { return cfg_; }

  private:
    AttentionConfig cfg_;
    LinearLayer q_proj_, k_proj_, v_proj_, out_proj_;

    Value split_heads(const Value& x) const;   // [B,N,C] -> [B*h,N,dh]
    Value merge_heads(const Value& x, int b) const;  // [B*h,N,dh] -> [B,N,C]
};

// K/V sequence reduction: tokens on an h x w grid are regrouped into r x r
// cells by pixel unshuffle (no interpolation), an affine map brings C*r^2
// back to C, then layer norm.
class SpatialReduce {
  public:
    SpatialReduce() = default;
    SpatialReduce(ParamStore& store, const std::string& name, int dim, int r, Rng& rng)
        : r_(r), mlp_(store, name + ".mlp", dim * r * r, dim, rng), ln_(store, name + ".ln", dim) {}

    // x:[B, gh*gw, C]
    Value forward(const Value& x, int gh, int gw) const;

    int reduction() const { return r_; }

  private:
    int r_ = 1;
    LinearLayer mlp_;
    LayerNormLayer ln_;
};

// Pre-norm transformer block: x + attn(LN(x)), then + MLP(LN(.)) with a GeLU
// hidden layer at expansion 4. With `reduced` construction the K/V path goes
// through SpatialReduce first (including r=1, where only the affine+LN apply).
class TransformerBlock {
  public:
    TransformerBlock() = default;
    TransformerBlock(ParamStore& store, const std::string& name, const AttentionConfig& cfg,
                     bool reduced, Rng& rng);

    Value forward(const Value& x, int gh, int gw, Value* scores = nullptr) const;

    const AttentionConfig& config() const { return attn_.config(); }

  private:
    LayerNormLayer ln1_, ln2_;
    MultiHeadAttention attn_;
    bool reduced_ = false;
    SpatialReduce reduce_;
    LinearLayer mlp_fc1_, mlp_fc2_;
};

}  // namespace sodkit
