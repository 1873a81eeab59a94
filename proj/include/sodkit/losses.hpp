#pragma once

#include "sodkit/model.hpp"

namespace sodkit {

// Stage weights of the deep-supervision sum, shallow (1/4 scale) to deep.
constexpr std::array<double, 4> kStageWeights{0.5, 0.7, 0.9, 1.1};

// Patch-wise ground truth: per 16x16-patch max of a binary mask, realized as
// channel-max over the pixel-unshuffled mask. mask:[B,1,H,W] with values in
// {0,1}; result [B,1,H/p,W/p] for patch side p.
std::vector<double> patchwise_gt(const Shape& mask_shape, const std::vector<double>& mask,
                                 int patch_px, Shape& out_shape);

// Mean BCE between the patch-grid prediction and its target.
Value global_loss(const Value& pg, const std::vector<double>& gg);

// Boundary-emphasis window: 31 at side 224, scaled with image side, odd, >= 3.
int boundary_window(int side);

// w = 1 + 5*|meanpool_k(G) - G| per pixel, pooling with same-padding.
std::vector<double> boundary_weights(const std::vector<double>& gt, int b, int h, int w,
                                     int window);

// Weighted BCE of a full-resolution prediction [B,1,H,W] against a binary
// mask of the same shape, normalized by the weight sum.
Value weighted_bce(const Value& p_full, const std::vector<double>& gt);

struct LossBreakdown {
    double lg = 0.0;
    std::array<double, 4> stage_p1{}, stage_p2{};
    double ll = 0.0;
    double total = 0.0;
};

// Eq-style staged sum: every stage prediction is compared against the same
// full-resolution ground truth.
Value decoder_loss(const NetworkOutput& out, const std::vector<double>& gt,
                   LossBreakdown* breakdown = nullptr);

Value total_loss(const Value& lg, const Value& ll);

}  // namespace sodkit
