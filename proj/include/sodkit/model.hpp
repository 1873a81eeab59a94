#pragma once

#include <array>
#include <optional>

#include "sodkit/attention.hpp"

namespace sodkit {

enum class RescaleMode { PixelShuffle, Bilinear };

RescaleMode rescale_mode_from_string(const std::string& s);
std::string to_string(RescaleMode m);

struct ModelConfig {
    int side = 64;
    std::array<int, 4> widths{16, 32, 64, 128};
    std::array<int, 4> depths{1, 1, 2, 1};
    std::array<int, 4> sr_factors{4, 2, 1, 1};
    int heads = 2;
    int patch_px = 16;   // global-context patch side in pixels
    int cg = 32;         // global branch feature width
    int dec_width = 32;  // decoder feature width
    bool global_context = true;
    // When false the branch is still built and supervised, but its features
    // are not concatenated into the decoder stages (fusion-path ablation).
    bool context_fusion = true;
    RescaleMode rescale = RescaleMode::PixelShuffle;
    int max_tokens = 4096;

    void validate() const;

    // decoder/encoder grid side at stage s in 1..4 (scales 1/4 .. 1/32)
    int grid(int stage) const { return side / (4 << (stage - 1)); }
    int patch_grid() const { return side / patch_px; }
    // branch features flow into the decoder only when both switches are on
    bool fuse_context() const { return global_context && context_fusion; }
    // full-resolution-equivalent scale of stage s
    int stage_scale(int stage) const { return side / grid(stage); }
};

// Mode-aware spatial rescale between square grids. Pixel-shuffle mode changes
// the channel count (lossless permutation); bilinear keeps it. Bilinear is
// only reachable in Bilinear mode -- in PixelShuffle mode every internal
// rescale is a permutation, enforced here.
Value rescale_spatial(const Value& x, int target, RescaleMode mode);
int rescale_channels(int c, int cur, int target, RescaleMode mode);

// tokens [B,N,C] <-> grid [B,C,g,g]
Value tokens_to_grid(const Value& t, int g);
Value grid_to_tokens(const Value& x);

class Encoder {
  public:
    Encoder(ParamStore& store, const ModelConfig& cfg, Rng& rng);

    // img:[B,3,S,S] -> features at 1/4, 1/8, 1/16, 1/32 of S
    std::array<Value, 4> forward(const Value& img) const;

  private:
    struct Stage {
        LinearLayer embed;
        Value pos;
        std::vector<TransformerBlock> blocks;
    };
    ModelConfig cfg_;
    std::array<Stage, 4> stages_;
};

struct GlobalOut {
    Value pg;  // [B,1,P,P], sigmoid range
    Value fg;  // [B,Cg,P,P], pre-head token features
};

class GlobalBranch {
  public:
    GlobalBranch(ParamStore& store, const ModelConfig& cfg, Rng& rng);

    Value fuse_encoder_features(const std::array<Value, 4>& pyr, bool train);
    GlobalOut predict_global(const Value& f_fuse);
    GlobalOut forward(const std::array<Value, 4>& pyr, bool train) {
        return predict_global(fuse_encoder_features(pyr, train));
    }

  private:
    ModelConfig cfg_;
    ConvBNAct fuse1_, fuse2_;
    TransformerBlock tf_;
    LinearLayer head_;
};

// P1 * (1 - P1), the confidence-gap map driving second-stage refinement.
Value uncertainty_map(const Value& p1);

struct CrmStageOut {
    Value p1, p2;  // stage-layout predictions, sigmoid range
    Value feat;    // feature handed to the next shallower stage
};

class CrmStage {
  public:
    CrmStage(ParamStore& store, const std::string& name, const ModelConfig& cfg, int stage,
             bool has_prev, Rng& rng);

    CrmStageOut forward(const Value& f_enc, const Value& prev_feat, const Value& fg, bool train);

    int grid() const { return grid_; }
    int scale() const { return r_stage_; }
    int prediction_channels() const { return out_ch_; }

  private:
    ModelConfig cfg_;
    int stage_, grid_, r_stage_, out_ch_;
    bool has_prev_;
    ConvLayer transport_;
    // 1x1 adapter on the incoming context channels, zero-initialized so the
    // fusion path starts as an exact no-op and grows only where it helps
    Value ctx_w_, ctx_b_;
    ConvBNAct f1a_, f1b_;
    ConvLayer p1_head_;
    ConvBNAct f2_;
    TransformerBlock tf_;
    ConvBNAct f3_;
    ConvLayer p2_head_;
};

struct StageOut {
    int index;  // 1 (shallowest, 1/4 scale) .. 4 (deepest, 1/32 scale)
    int scale;
    Value p1, p2;            // stage layout
    Value p1_full, p2_full;  // [B,1,S,S]
};

struct NetworkOutput {
    Value pg;                      // null when the global branch is disabled
    std::vector<StageOut> stages;  // stages[0] is stage 1; stage-1 P2 is the network output
};

class Network {
  public:
    Network(ModelConfig cfg, std::uint64_t init_seed);

    NetworkOutput forward(const Value& img, bool train);

    // Encoder + global branch only (patch-grid prediction); requires the
    // branch to be enabled.
    Value forward_global(const Value& img, bool train);

    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const ModelConfig& config() const { return cfg_; }

  private:
    ModelConfig cfg_;
    ParamStore store_;
    std::optional<Encoder> encoder_;
    std::optional<GlobalBranch> branch_;
    std::vector<CrmStage> crm_;  // index 0 -> stage 1
};

}  // namespace sodkit
