#include "sodkit/synth.hpp"

#include <array>

namespace sodkit {

namespace {

struct Figure {
    // 0 = ellipse, 1 = convex polygon, 2 = ring
    int kind = 0;
    double cx = 0, cy = 0;      // center, pixel units
    double rx = 0, ry = 0;      // radii (ellipse/ring outer)
    double inner = 0;           // ring inner radius
    double angle = 0;           // ellipse rotation
    int nverts = 0;             // polygon
    std::array<double, 8> vx{}, vy{};
    std::array<double, 3> color{};
};

bool inside(const Figure& f, double x, double y) {
    const double dx = x - f.cx, dy = y - f.cy;
    switch (f.kind) {
        case 0: {
            const double c = std::cos(f.angle), s = std::sin(f.angle);
            const double u = (c * dx + s * dy) / f.rx;
            const double v = (-s * dx + c * dy) / f.ry;
            return u * u + v * v <= 1.0;
        }
        case 2: {
            const double d = std::sqrt(dx * dx + dy * dy);
            return d <= f.rx && d >= f.inner;
        }
        default: {
            // convex polygon, vertices in counter-clockwise order
            for (int i = 0; i < f.nverts; ++i) {
                const int j = (i + 1) % f.nverts;
                const double ex = f.vx[j] - f.vx[i], ey = f.vy[j] - f.vy[i];
                if (ex * (y - f.vy[i]) - ey * (x - f.vx[i]) < 0.0) return false;
            }
            return true;
        }
    }
}

Figure draw_figure(Rng& rng, int side) {
    Figure f;
    f.kind = rng.uniform_int(0, 2);
    f.cx = rng.uniform(0.2, 0.8) * side;
    f.cy = rng.uniform(0.2, 0.8) * side;
    f.rx = rng.uniform(0.08, 0.3) * side;
    f.ry = rng.uniform(0.08, 0.3) * side;
    f.angle = rng.uniform(0.0, 2.0 * M_PI);
    f.inner = f.rx * rng.uniform(0.4, 0.75);
    f.nverts = rng.uniform_int(3, 6);
    std::array<double, 8> ang{};
    for (int i = 0; i < f.nverts; ++i) ang[i] = rng.uniform(0.0, 2.0 * M_PI);
    std::sort(ang.begin(), ang.begin() + f.nverts);
    for (int i = 0; i < f.nverts; ++i) {
        const double r = rng.uniform(0.08, 0.3) * side;
        f.vx[i] = f.cx + r * std::cos(ang[i]);
        f.vy[i] = f.cy + r * std::sin(ang[i]);
    }
    for (auto& c : f.color) c = rng.uniform(0.0, 1.0);
    return f;
}

// supersampled coverage at a pixel, thresholded to a hard in/out decision
bool covered(const Figure& f, int x, int y) {
    int hits = 0;
    for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx)
            hits += inside(f, x + 0.25 + 0.5 * sx, y + 0.25 + 0.5 * sy) ? 1 : 0;
    return hits >= 2;
}

}  // namespace

Sample generate_sample(std::uint64_t seed, int side) {
    if (side <= 0 || side % 32 != 0)
        throw ValidationError("generate_sample: side must be a positive multiple of 32");
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x1234567ull);
    const size_t n = static_cast<size_t>(side) * side;
    Sample s;
    s.side = side;
    s.seed = seed;
    s.image.resize(3 * n);
    s.mask.assign(n, 0.0);

    // low-frequency background: coarse random grid, bilinearly upsampled
    const int g = side / 8;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> coarse(static_cast<size_t>(g + 1) * (g + 1));
        for (auto& v : coarse) v = rng.uniform(0.1, 0.7);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const double fy = static_cast<double>(y) / side * g;
                const double fx = static_cast<double>(x) / side * g;
                const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
                const double wy = fy - y0, wx = fx - x0;
                auto at = [&](int yy, int xx) {
                    return coarse[static_cast<size_t>(yy) * (g + 1) + xx];
                };
                s.image[(static_cast<size_t>(c) * side + y) * side + x] =
                    (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                    wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
            }
    }

    // figures, rejection-sampled until the foreground fraction lands in range
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 100)
            throw ValidationError("generate_sample: foreground rejection cap exceeded");
        const int count = rng.uniform_int(1, 3);
        std::vector<Figure> figs(count);
        for (auto& f : figs) f = draw_figure(rng, side);
        std::vector<double> mask(n, 0.0);
        long long fg = 0;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                for (const auto& f : figs)
                    if (covered(f, x, y)) {
                        mask[static_cast<size_t>(y) * side + x] = 1.0;
                        ++fg;
                        break;
                    }
        const double frac = static_cast<double>(fg) / static_cast<double>(n);
        if (frac < 0.02 || frac > 0.6) continue;
        s.mask = std::move(mask);
        // paint in draw order so later figures occlude earlier ones
        for (const auto& f : figs)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    if (covered(f, x, y))
                        for (int c = 0; c < 3; ++c)
                            s.image[(static_cast<size_t>(c) * side + y) * side + x] =
                                f.color[c];
        return s;
    }
}

namespace {

// 90-degree clockwise rotation of one plane
std::vector<double> rot90(const std::vector<double>& in, int side) {
    std::vector<double> out(in.size());
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            out[static_cast<size_t>(y) * side + x] =
                in[static_cast<size_t>(side - 1 - x) * side + y];
    return out;
}

std::vector<double> hflip(const std::vector<double>& in, int side) {
    std::vector<double> out(in.size());
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            out[static_cast<size_t>(y) * side + x] =
                in[static_cast<size_t>(y) * side + (side - 1 - x)];
    return out;
}

void apply_plane(std::vector<double>& plane, int side, int k, bool flip) {
    for (int i = 0; i < k; ++i) plane = rot90(plane, side);
    if (flip) plane = hflip(plane, side);
}

}  // namespace

Sample augment(const Sample& s, std::uint64_t seed) {
    if (static_cast<long long>(s.mask.size()) !=
        static_cast<long long>(s.side) * s.side)
        throw DimensionError("augment: sample planes must be square side*side");
    Rng rng(seed * 0x9E3779B97F4A7C15ull + 0x7654321ull);
    const int k = rng.uniform_int(0, 3);
    const bool flip = rng.uniform() < 0.5;
    Sample out = s;
    const size_t n = s.mask.size();
    for (int c = 0; c < 3; ++c) {
        std::vector<double> plane(out.image.begin() + c * n, out.image.begin() + (c + 1) * n);
        apply_plane(plane, s.side, k, flip);
        std::copy(plane.begin(), plane.end(), out.image.begin() + c * n);
    }
    apply_plane(out.mask, s.side, k, flip);
    return out;
}

Image sample_image(const Sample& s) { return Image{s.side, s.side, 3, s.image}; }

Image sample_mask(const Sample& s) { return Image{s.side, s.side, 1, s.mask}; }

}  // namespace sodkit
