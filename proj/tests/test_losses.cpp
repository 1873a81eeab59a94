#include <doctest.h>

#include "sodkit/losses.hpp"
#include "sodkit/params.hpp"

using namespace sodkit;

namespace {

std::vector<double> random_mask(Rng& rng, size_t n, double p = 0.5) {
    std::vector<double> m(n);
    for (auto& v : m) v = rng.uniform() < p ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("patchwise_gt equals brute-force per-patch max") {
    Rng rng(41);
    for (int side : {32, 64}) {
        const int p = 16;
        const Shape ms{2, 1, side, side};
        auto mask = random_mask(rng, static_cast<size_t>(numel(ms)), 0.1);
        Shape out_shape;
        auto got = patchwise_gt(ms, mask, p, out_shape);
        const int pg = side / p;
        REQUIRE(out_shape == Shape{2, 1, pg, pg});
        for (int b = 0; b < 2; ++b)
            for (int py = 0; py < pg; ++py)
                for (int px = 0; px < pg; ++px) {
                    double mx = 0.0;
                    for (int y = py * p; y < (py + 1) * p; ++y)
                        for (int x = px * p; x < (px + 1) * p; ++x)
                            mx = std::max(mx,
                                          mask[(static_cast<size_t>(b) * side + y) * side + x]);
                    CHECK(got[(static_cast<size_t>(b) * pg + py) * pg + px] == mx);
                }
    }
}

TEST_CASE("patchwise_gt validates its input") {
    Shape out_shape;
    CHECK_THROWS_AS(patchwise_gt(Shape{1, 2, 4, 4}, std::vector<double>(32, 0.0), 2, out_shape),
                    DimensionError);
    CHECK_THROWS_AS(patchwise_gt(Shape{1, 1, 4, 4}, std::vector<double>(16, 0.5), 2, out_shape),
                    ValidationError);
}

TEST_CASE("global loss reference values") {
    // uniform 0.5 prediction against any target: ln 2 per element
    auto p = make_value(Shape{1, 1, 2, 2}, std::vector<double>(4, 0.5));
    CHECK(global_loss(p, {1, 0, 1, 0})->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // confident correct prediction: -ln 0.9
    auto q = make_value(Shape{1, 1, 1, 1}, std::vector<double>{0.9});
    CHECK(global_loss(q, {1.0})->data[0] == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("boundary window scales with the image side") {
    CHECK(boundary_window(224) == 31);
    CHECK(boundary_window(64) == 9);
    CHECK(boundary_window(32) == 5);
    CHECK(boundary_window(8) == 3);  // floor of the scale, never below 3
}

TEST_CASE("boundary weights match a brute-force box mean") {
    Rng rng(42);
    const int h = 12, w = 12, win = 5, half = 2;
    auto gt = random_mask(rng, h * w);
    auto weights = boundary_weights(gt, 1, h, w, win);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sum = 0;
            int cnt = 0;
            for (int yy = std::max(0, y - half); yy <= std::min(h - 1, y + half); ++yy)
                for (int xx = std::max(0, x - half); xx <= std::min(w - 1, x + half); ++xx) {
                    sum += gt[yy * w + xx];
                    ++cnt;
                }
            const double expect = 1.0 + 5.0 * std::abs(sum / cnt - gt[y * w + x]);
            CHECK(weights[y * w + x] == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("flat masks reduce the weighted loss to plain BCE") {
    // constant ground truth has no boundary: w = 1 everywhere
    Rng rng(43);
    auto p = make_value(Shape{1, 1, 8, 8});
    for (auto& v : p->data) v = 0.05 + 0.9 * rng.uniform();
    const std::vector<double> ones(64, 1.0);
    auto lw = weighted_bce(p, ones);
    auto lp = bce_mean(p, ones);
    CHECK(lw->data[0] == doctest::Approx(lp->data[0]).epsilon(1e-12));
}

namespace {

NetworkOutput fake_output(const Value& p_full) {
    NetworkOutput out;
    for (int s = 1; s <= 4; ++s) {
        StageOut st;
        st.index = s;
        st.scale = 4 << (s - 1);
        st.p1 = st.p2 = p_full;
        st.p1_full = st.p2_full = p_full;
        out.stages.push_back(st);
    }
    return out;
}

}  // namespace

TEST_CASE("identical stage predictions sum to 6.4x the single loss") {
    Rng rng(44);
    auto p = make_value(Shape{1, 1, 8, 8});
    for (auto& v : p->data) v = 0.05 + 0.9 * rng.uniform();
    auto gt = random_mask(rng, 64);
    auto out = fake_output(p);
    LossBreakdown bd;
    auto ll = decoder_loss(out, gt, &bd);
    const double single = weighted_bce(p, gt)->data[0];
    // sum over stages of weight * (L1 + L2) with all losses equal
    CHECK(ll->data[0] == doctest::Approx(6.4 * single).epsilon(1e-12));
    for (int s = 0; s < 4; ++s) {
        CHECK(bd.stage_p1[s] == doctest::Approx(single).epsilon(1e-12));
        CHECK(bd.stage_p2[s] == doctest::Approx(single).epsilon(1e-12));
    }
    CHECK(bd.ll == doctest::Approx(ll->data[0]));
}

TEST_CASE("deep stages weigh 1.1/0.5 more than shallow ones") {
    Rng rng(45);
    auto base = make_value(Shape{1, 1, 8, 8});
    for (auto& v : base->data) v = 0.05 + 0.9 * rng.uniform();
    auto gt = random_mask(rng, 64);
    const double l0 = decoder_loss(fake_output(base), gt)->data[0];

    auto perturb = [&](int stage) {
        auto p = make_value(base->shape, base->data);
        p->data[10] += 1e-6;
        auto out = fake_output(base);
        out.stages[stage].p1_full = p;
        return decoder_loss(out, gt)->data[0] - l0;
    };
    const double d1 = perturb(0), d4 = perturb(3);
    CHECK(d4 / d1 == doctest::Approx(1.1 / 0.5).epsilon(1e-4));
}

TEST_CASE("non-finite components abort with a numerical error") {
    auto ok = scalar_value(1.0);
    auto bad = scalar_value(std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(total_loss(ok, bad), NumericalError);
    CHECK_THROWS_AS(total_loss(bad, ok), NumericalError);
    CHECK(total_loss(ok, ok)->data[0] == doctest::Approx(2.0));
}
