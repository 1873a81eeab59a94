#include "sodkit/losses.hpp"

#include <cmath>

namespace sodkit {

namespace {

void check_binary(const std::vector<double>& mask, const char* who) {
    for (double v : mask)
        if (v != 0.0 && v != 1.0)
            throw ValidationError(std::string(who) + ": mask must be binary {0,1}");
}

}  // namespace

std::vector<double> patchwise_gt(const Shape& mask_shape, const std::vector<double>& mask,
                                 int patch_px, Shape& out_shape) {
    if (mask_shape.size() != 4 || mask_shape[1] != 1)
        throw DimensionError("patchwise_gt: expected [B,1,H,W] mask");
    check_binary(mask, "patchwise_gt");
    Shape lo_shape;
    std::vector<double> lo;
    unshuffle_raw(mask_shape, mask, patch_px, lo_shape, lo);  // [B,p^2,H/p,W/p]
    const int b = lo_shape[0], c = lo_shape[1];
    const long long hw = static_cast<long long>(lo_shape[2]) * lo_shape[3];
    out_shape = Shape{b, 1, lo_shape[2], lo_shape[3]};
    std::vector<double> out(static_cast<size_t>(b) * hw, 0.0);
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const double* src = lo.data() + (static_cast<long long>(bi) * c + ci) * hw;
            double* dst = out.data() + static_cast<long long>(bi) * hw;
            for (long long i = 0; i < hw; ++i) dst[i] = std::max(dst[i], src[i]);
        }
    return out;
}

Value global_loss(const Value& pg, const std::vector<double>& gg) {
    return bce_mean(pg, gg);
}

int boundary_window(int side) {
    int k = static_cast<int>(std::lround(31.0 * side / 224.0));
    if (k % 2 == 0) k += 1;
    return std::max(k, 3);
}

std::vector<double> boundary_weights(const std::vector<double>& gt, int b, int h, int w,
                                     int window) {
    const int half = window / 2;
    std::vector<double> out(gt.size());
    // summed-area table per image for the box mean
    std::vector<double> sat(static_cast<size_t>(h + 1) * (w + 1));
    for (int bi = 0; bi < b; ++bi) {
        const double* g = gt.data() + static_cast<long long>(bi) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                sat[(y + 1) * (w + 1) + (x + 1)] = g[y * w + x] + sat[y * (w + 1) + (x + 1)] +
                                                   sat[(y + 1) * (w + 1) + x] -
                                                   sat[y * (w + 1) + x];
        double* o = out.data() + static_cast<long long>(bi) * h * w;
        for (int y = 0; y < h; ++y) {
            const int y0 = std::max(0, y - half), y1 = std::min(h - 1, y + half);
            for (int x = 0; x < w; ++x) {
                const int x0 = std::max(0, x - half), x1 = std::min(w - 1, x + half);
                const double sum = sat[(y1 + 1) * (w + 1) + (x1 + 1)] -
                                   sat[y0 * (w + 1) + (x1 + 1)] -
                                   sat[(y1 + 1) * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
                const double mean = sum / ((y1 - y0 + 1) * (x1 - x0 + 1));
                o[y * w + x] = 1.0 + 5.0 * std::abs(mean - g[y * w + x]);
            }
        }
    }
    return out;
}

Value weighted_bce(const Value& p_full, const std::vector<double>& gt) {
    if (p_full->shape.size() != 4 || p_full->shape[1] != 1)
        throw DimensionError("weighted_bce: expected [B,1,H,W] prediction");
    if (p_full->data.size() != gt.size())
        throw DimensionError("weighted_bce: prediction/mask size mismatch");
    check_binary(gt, "weighted_bce");
    const int b = p_full->shape[0], h = p_full->shape[2], w = p_full->shape[3];
    auto weights = boundary_weights(gt, b, h, w, boundary_window(std::max(h, w)));
    return weighted_bce_raw(p_full, gt, weights);
}

Value decoder_loss(const NetworkOutput& out, const std::vector<double>& gt,
                   LossBreakdown* breakdown) {
    if (out.stages.size() != 4) throw DimensionError("decoder_loss: expected 4 stages");
    Value ll;
    for (int s = 1; s <= 4; ++s) {
        const auto& st = out.stages[s - 1];
        auto l1 = weighted_bce(st.p1_full, gt);
        auto l2 = weighted_bce(st.p2_full, gt);
        if (breakdown) {
            breakdown->stage_p1[s - 1] = l1->data[0];
            breakdown->stage_p2[s - 1] = l2->data[0];
        }
        auto term = affine(add(l1, l2), kStageWeights[s - 1], 0.0);
        ll = ll ? add(ll, term) : term;
    }
    if (breakdown) breakdown->ll = ll->data[0];
    return ll;
}

Value total_loss(const Value& lg, const Value& ll) {
    if (!std::isfinite(lg->data[0]) || !std::isfinite(ll->data[0]))
        throw NumericalError("total_loss: non-finite loss component");
    return add(lg, ll);
}

}  // namespace sodkit
