#include "sodkit/pixel_shuffle.hpp"

#include <algorithm>
#include <cmath>

#include "sodkit/ops.hpp"

namespace sodkit {

std::vector<long long> unshuffle_index_map(int c, int h, int w, int r) {
    if (r < 1) throw DimensionError("pixel_unshuffle: r must be positive");
    if (h % r != 0 || w % r != 0)
        throw DimensionError("pixel_unshuffle: r=" + std::to_string(r) +
                             " does not divide spatial size " + std::to_string(h) + "x" +
                             std::to_string(w));
    const int lh = h / r, lw = w / r;
    std::vector<long long> map(static_cast<size_t>(c) * h * w);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int dst_c = c * r * (y % r) + c * (x % r) + ci;
                const long long dst =
                    (static_cast<long long>(dst_c) * lh + y / r) * lw + x / r;
                map[dst] = (static_cast<long long>(ci) * h + y) * w + x;
            }
    return map;
}

namespace {

struct UnshuffleGeom {
    int b, c, h, w, lh, lw;
    std::vector<long long> map;  // per-image gather map, out -> in
};

UnshuffleGeom unshuffle_geom(const Shape& s, int r) {
    if (s.size() != 4) throw DimensionError("pixel_unshuffle: expected NCHW input");
    UnshuffleGeom g{s[0], s[1], s[2], s[3], s[2] / r, s[3] / r, {}};
    g.map = unshuffle_index_map(g.c, g.h, g.w, r);
    return g;
}

void gather_batched(const std::vector<double>& in, const std::vector<long long>& map,
                    int batch, long long per_image, std::vector<double>& out) {
    for (int b = 0; b < batch; ++b) {
        const double* src = in.data() + static_cast<long long>(b) * per_image;
        double* dst = out.data() + static_cast<long long>(b) * per_image;
        for (long long i = 0; i < per_image; ++i) dst[i] = src[map[i]];
    }
}

void scatter_batched(const std::vector<double>& in, const std::vector<long long>& map,
                     int batch, long long per_image, std::vector<double>& out) {
    for (int b = 0; b < batch; ++b) {
        const double* src = in.data() + static_cast<long long>(b) * per_image;
        double* dst = out.data() + static_cast<long long>(b) * per_image;
        for (long long i = 0; i < per_image; ++i) dst[map[i]] = src[i];
    }
}

}  // namespace

void unshuffle_raw(const Shape& in_shape, const std::vector<double>& in, int r,
                   Shape& out_shape, std::vector<double>& out) {
    auto g = unshuffle_geom(in_shape, r);
    out_shape = Shape{g.b, g.c * r * r, g.lh, g.lw};
    out.assign(in.size(), 0.0);
    gather_batched(in, g.map, g.b, static_cast<long long>(g.c) * g.h * g.w, out);
}

void shuffle_raw(const Shape& in_shape, const std::vector<double>& in, int r,
                 Shape& out_shape, std::vector<double>& out) {
    if (in_shape.size() != 4) throw DimensionError("pixel_shuffle: expected NCHW input");
    if (in_shape[1] % (r * r) != 0)
        throw DimensionError("pixel_shuffle: channel count " + std::to_string(in_shape[1]) +
                             " not divisible by r^2=" + std::to_string(r * r));
    const Shape hr{in_shape[0], in_shape[1] / (r * r), in_shape[2] * r, in_shape[3] * r};
    auto g = unshuffle_geom(hr, r);
    out_shape = hr;
    out.assign(in.size(), 0.0);
    scatter_batched(in, g.map, g.b, static_cast<long long>(g.c) * g.h * g.w, out);
}

Value pixel_unshuffle(const Value& x, int r) {
    auto g = unshuffle_geom(x->shape, r);
    auto out = make_value(Shape{g.b, g.c * r * r, g.lh, g.lw});
    const long long per = static_cast<long long>(g.c) * g.h * g.w;
    gather_batched(x->data, g.map, g.b, per, out->data);
    if (x->requires_grad) {
        Node* o = out.get();
        out->requires_grad = true;
        out->parents = {x};
        out->backward_fn = [x, o, map = std::move(g.map), b = g.b, per] {
            x->ensure_grad();
            for (int i = 0; i < b; ++i) {
                const double* src = o->grad.data() + static_cast<long long>(i) * per;
                double* dst = x->grad.data() + static_cast<long long>(i) * per;
                for (long long j = 0; j < per; ++j) dst[map[j]] += src[j];
            }
        };
    }
    return out;
}

Value pixel_shuffle(const Value& x, int r) {
    if (x->shape.size() != 4) throw DimensionError("pixel_shuffle: expected NCHW input");
    if (x->shape[1] % (r * r) != 0)
        throw DimensionError("pixel_shuffle: channel count " + std::to_string(x->shape[1]) +
                             " not divisible by r^2=" + std::to_string(r * r));
    const Shape hr{x->shape[0], x->shape[1] / (r * r), x->shape[2] * r, x->shape[3] * r};
    auto g = unshuffle_geom(hr, r);
    auto out = make_value(hr);
    const long long per = static_cast<long long>(g.c) * g.h * g.w;
    scatter_batched(x->data, g.map, g.b, per, out->data);
    if (x->requires_grad) {
        Node* o = out.get();
        out->requires_grad = true;
        out->parents = {x};
        out->backward_fn = [x, o, map = std::move(g.map), b = g.b, per] {
            x->ensure_grad();
            for (int i = 0; i < b; ++i) {
                const double* src = o->grad.data() + static_cast<long long>(i) * per;
                double* dst = x->grad.data() + static_cast<long long>(i) * per;
                for (long long j = 0; j < per; ++j) dst[j] += src[map[j]];
            }
        };
    }
    return out;
}

Value bilinear_resize(const Value& x, int out_h, int out_w) {
    if (x->shape.size() != 4) throw DimensionError("bilinear_resize: expected NCHW input");
    if (out_h < 1 || out_w < 1) throw DimensionError("bilinear_resize: bad target size");
    const int b = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    auto out = make_value(Shape{b, c, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    // Per output pixel: 4 source taps and weights (half-pixel centers).
    struct Tap {
        int y0, y1, x0, x1;
        double wy, wx;
    };
    std::vector<Tap> taps(static_cast<size_t>(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            taps[static_cast<size_t>(oy) * out_w + ox] = {
                y0, std::min(y0 + 1, h - 1), x0, std::min(x0 + 1, w - 1), fy - y0, fx - x0};
        }
    }
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const double* src =
                x->data.data() + (static_cast<long long>(bi) * c + ci) * h * w;
            double* dst =
                out->data.data() + (static_cast<long long>(bi) * c + ci) * out_h * out_w;
            for (size_t i = 0; i < taps.size(); ++i) {
                const Tap& t = taps[i];
                const double v00 = src[t.y0 * w + t.x0], v01 = src[t.y0 * w + t.x1];
                const double v10 = src[t.y1 * w + t.x0], v11 = src[t.y1 * w + t.x1];
                dst[i] = (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) +
                         t.wy * ((1 - t.wx) * v10 + t.wx * v11);
            }
        }
    if (x->requires_grad) {
        Node* o = out.get();
        out->requires_grad = true;
        out->parents = {x};
        out->backward_fn = [x, o, taps = std::move(taps), b, c, h, w, out_h, out_w] {
            x->ensure_grad();
            for (int bi = 0; bi < b; ++bi)
                for (int ci = 0; ci < c; ++ci) {
                    double* dst =
                        x->grad.data() + (static_cast<long long>(bi) * c + ci) * h * w;
                    const double* src = o->grad.data() +
                                        (static_cast<long long>(bi) * c + ci) * out_h * out_w;
                    for (size_t i = 0; i < taps.size(); ++i) {
                        const Tap& t = taps[i];
                        const double g = src[i];
                        dst[t.y0 * w + t.x0] += (1 - t.wy) * (1 - t.wx) * g;
                        dst[t.y0 * w + t.x1] += (1 - t.wy) * t.wx * g;
                        dst[t.y1 * w + t.x0] += t.wy * (1 - t.wx) * g;
                        dst[t.y1 * w + t.x1] += t.wy * t.wx * g;
                    }
                }
        };
    }
    return out;
}

}  // namespace sodkit
