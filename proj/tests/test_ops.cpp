#include <doctest.h>

#include "sodkit/gradcheck.hpp"
#include "sodkit/params.hpp"

using namespace sodkit;

TEST_CASE("matmul against a hand computation") {
    auto a = make_value(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = make_value(Shape{3, 2}, {7, 8, 9, 10, 11, 12});
    auto c = matmul(a, b);
    REQUIRE(c->shape == Shape{2, 2});
    CHECK(c->data[0] == doctest::Approx(58));
    CHECK(c->data[1] == doctest::Approx(64));
    CHECK(c->data[2] == doctest::Approx(139));
    CHECK(c->data[3] == doctest::Approx(154));
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("bmm with and without transpose agrees with matmul") {
    Rng rng(11);
    std::vector<double> da(12), db(12);
    for (auto& v : da) v = rng.normal();
    for (auto& v : db) v = rng.normal();
    auto a = make_value(Shape{2, 2, 3}, da);
    auto b = make_value(Shape{2, 3, 2}, db);
    auto c = bmm(a, b);
    for (int g = 0; g < 2; ++g) {
        auto ma = make_value(Shape{2, 3},
                             {da.begin() + g * 6, da.begin() + (g + 1) * 6});
        auto mb = make_value(Shape{3, 2},
                             {db.begin() + g * 6, db.begin() + (g + 1) * 6});
        auto mc = matmul(ma, mb);
        for (int i = 0; i < 4; ++i)
            CHECK(c->data[g * 4 + i] == doctest::Approx(mc->data[i]).epsilon(1e-12));
    }
    // b transposed: bT[g] has shape [2,3], bmm(a, bT, transpose_b) == bmm(a, b)
    auto bt = permute(b, {0, 2, 1});
    auto c2 = bmm(a, bt, /*transpose_b=*/true);
    for (size_t i = 0; i < c->data.size(); ++i)
        CHECK(c2->data[i] == doctest::Approx(c->data[i]).epsilon(1e-12));
}

TEST_CASE("linear equals matmul plus bias broadcast") {
    auto x = make_value(Shape{2, 2, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 1});
    auto w = make_value(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
    auto b = make_value(Shape{2}, std::vector<double>{0.5, -0.5});
    auto y = linear(x, w, b);
    REQUIRE(y->shape == Shape{2, 2, 2});
    CHECK(y->data[0] == doctest::Approx(1.5));   // row (1,0,0) -> (1,2) + bias
    CHECK(y->data[1] == doctest::Approx(1.5));
    CHECK(y->data[6] == doctest::Approx(9.5));   // row (1,1,1) -> (9,12) + bias
    CHECK(y->data[7] == doctest::Approx(11.5));
}

TEST_CASE("conv2d 1x1 and 3x3 hand cases") {
    // 1x1 conv is a per-pixel linear map
    auto x = make_value(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto w = make_value(Shape{1, 2, 1, 1}, {2.0, 10.0});
    auto b = make_value(Shape{1}, std::vector<double>{1.0});
    auto y = conv2d(x, w, b, 1, 0);
    REQUIRE(y->shape == Shape{1, 1, 2, 2});
    CHECK(y->data[0] == doctest::Approx(2 * 1 + 10 * 5 + 1));
    CHECK(y->data[3] == doctest::Approx(2 * 4 + 10 * 8 + 1));

    // 3x3 all-ones kernel with pad 1 computes neighborhood sums
    auto x2 = make_value(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto w2 = make_value(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
    auto y2 = conv2d(x2, w2, nullptr, 1, 1);
    CHECK(y2->data[4] == doctest::Approx(45));  // center sees everything
    CHECK(y2->data[0] == doctest::Approx(1 + 2 + 4 + 5));

    // stride 2 halves the grid
    auto y3 = conv2d(x2, w2, nullptr, 2, 1);
    REQUIRE(y3->shape == Shape{1, 1, 2, 2});
}

TEST_CASE("batch_norm normalizes in train mode and tracks running stats") {
    auto x = make_value(Shape{2, 1, 1, 2}, {1.0, 2.0, 3.0, 6.0});
    auto gamma = make_value(Shape{1}, std::vector<double>{1.0});
    auto beta = make_value(Shape{1}, std::vector<double>{0.0});
    BatchNormBuffers buf{make_value(Shape{1}, std::vector<double>{0.0}), make_value(Shape{1}, std::vector<double>{1.0})};
    auto y = batch_norm(x, gamma, beta, buf, /*train=*/true);
    double mean = 0, var = 0;
    for (double v : y->data) mean += v / 4;
    for (double v : y->data) var += v * v / 4;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));  // eps slightly shrinks it
    // running stats: (1-m)*old + m*batch, biased variance
    CHECK(buf.running_mean->data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 3.0));
    CHECK(buf.running_var->data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 3.5));

    // eval mode uses the stored statistics, not the batch
    BatchNormBuffers buf2{make_value(Shape{1}, std::vector<double>{1.0}), make_value(Shape{1}, std::vector<double>{4.0})};
    auto z = batch_norm(x, gamma, beta, buf2, /*train=*/false);
    CHECK(z->data[0] == doctest::Approx((1.0 - 1.0) / std::sqrt(4.0 + kBatchNormEps)));
    CHECK(z->data[3] == doctest::Approx((6.0 - 1.0) / std::sqrt(4.0 + kBatchNormEps)));
    CHECK(buf2.running_mean->data[0] == 1.0);  // untouched in eval
}

TEST_CASE("layer_norm zero-mean unit-var over last axis") {
    auto x = make_value(Shape{2, 3}, {1, 2, 3, -1, 0, 7});
    auto gamma = make_value(Shape{3}, {1, 1, 1});
    auto beta = make_value(Shape{3}, {0, 0, 0});
    auto y = layer_norm(x, gamma, beta);
    for (int r = 0; r < 2; ++r) {
        double m = 0, v = 0;
        for (int c = 0; c < 3; ++c) m += y->data[r * 3 + c] / 3;
        for (int c = 0; c < 3; ++c) v += y->data[r * 3 + c] * y->data[r * 3 + c] / 3;
        CHECK(m == doctest::Approx(0.0).epsilon(1e-10));
        CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    auto x = make_value(Shape{2, 3}, {1, 2, 3, -5, 0, 5});
    auto y = softmax_lastdim(x);
    for (int r = 0; r < 2; ++r) {
        double s = 0;
        for (int c = 0; c < 3; ++c) s += y->data[r * 3 + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto x2 = affine(x, 1.0, 100.0);
    auto y2 = softmax_lastdim(x2);
    for (size_t i = 0; i < y->data.size(); ++i)
        CHECK(y2->data[i] == doctest::Approx(y->data[i]).epsilon(1e-12));
}

TEST_CASE("activation values at reference points") {
    auto x = make_value(Shape{5}, {-2.0, -0.5, 0.0, 0.5, 2.0});
    auto relu = activation(x, Act::Relu);
    CHECK(relu->data[0] == 0.0);
    CHECK(relu->data[4] == 2.0);
    auto leaky = activation(x, Act::LeakyRelu);
    CHECK(leaky->data[0] == doctest::Approx(-2.0 * kLeakySlope));
    CHECK(leaky->data[4] == 2.0);
    auto gelu = activation(x, Act::Gelu);
    CHECK(gelu->data[2] == 0.0);
    CHECK(gelu->data[3] ==
          doctest::Approx(0.5 * 0.5 * (1.0 + std::erf(0.5 / std::sqrt(2.0)))).epsilon(1e-14));
    auto sig = sigmoid(x);
    CHECK(sig->data[2] == doctest::Approx(0.5));
    CHECK(sig->data[4] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));
}

TEST_CASE("permute and reshape round trips") {
    Rng rng(3);
    std::vector<double> d(24);
    for (auto& v : d) v = rng.normal();
    auto x = make_value(Shape{2, 3, 4}, d);
    auto p = permute(x, {2, 0, 1});
    REQUIRE(p->shape == Shape{4, 2, 3});
    CHECK(p->data[0] == x->data[0]);
    // (i,j,k) of p equals (j,k,i) of x
    CHECK(p->data[(1 * 2 + 1) * 3 + 2] == x->data[(1 * 3 + 2) * 4 + 1]);
    auto back = permute(p, {1, 2, 0});
    CHECK(back->data == x->data);
    CHECK_THROWS_AS(reshape(x, Shape{5, 5}), DimensionError);
    CHECK(reshape(x, Shape{6, 4})->data == x->data);
}

TEST_CASE("concat_axis1 stacks channels") {
    auto a = make_value(Shape{2, 1, 2}, {1, 2, 3, 4});
    auto b = make_value(Shape{2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
    auto c = concat_axis1({a, b});
    REQUIRE(c->shape == Shape{2, 3, 2});
    CHECK(c->data == std::vector<double>{1, 2, 5, 6, 7, 8, 3, 4, 9, 10, 11, 12});
}

TEST_CASE("add_broadcast0 adds a leading-1 tensor to every batch slice") {
    auto x = make_value(Shape{2, 2}, {1, 2, 3, 4}, true);
    auto p = make_value(Shape{1, 2}, {10, 20}, true);
    auto y = add_broadcast0(x, p);
    CHECK(y->data == std::vector<double>{11, 22, 13, 24});
    backward(sum_all(y));
    CHECK(p->grad[0] == doctest::Approx(2.0));  // accumulated over the batch
    CHECK(p->grad[1] == doctest::Approx(2.0));
}

TEST_CASE("bce_mean hand values") {
    auto p = make_value(Shape{2}, {0.5, 0.9});
    auto l = bce_mean(p, {1.0, 1.0});
    CHECK(l->data[0] ==
          doctest::Approx(0.5 * (-std::log(0.5) - std::log(0.9))).epsilon(1e-12));
    CHECK_THROWS_AS(bce_mean(p, {1.0}), DimensionError);
}

TEST_CASE("weighted_bce_raw with flat weights equals bce_mean") {
    auto p = make_value(Shape{4}, {0.2, 0.8, 0.4, 0.6});
    const std::vector<double> gt{0, 1, 1, 0};
    auto plain = bce_mean(p, gt);
    auto weighted = weighted_bce_raw(p, gt, std::vector<double>(4, 2.5));
    CHECK(weighted->data[0] == doctest::Approx(plain->data[0]).epsilon(1e-12));
}

TEST_CASE("adam zero learning rate and zero gradient are no-ops") {
    std::vector<double> params{1.0, -2.0};
    const std::vector<double> orig = params;
    AdamState st;
    adam_step(params, {0.0, 0.0}, st, 1e-2);
    CHECK(params == orig);  // zero grad -> zero update exactly
    CHECK_THROWS_AS(adam_step(params, {1.0, 1.0}, st, -1.0), ConfigError);
}

TEST_CASE("adam single step matches the closed form") {
    std::vector<double> params{0.0};
    AdamState st;
    adam_step(params, {2.0}, st, 0.1);
    // bias-corrected first step: update = lr * g/|g| / (1 + eps/|g|) approx
    const double m = 0.1 * 2.0 / (1 - 0.9);
    const double v = 0.001 * 4.0 / (1 - 0.999);
    CHECK(params[0] == doctest::Approx(-0.1 * m / (std::sqrt(v) + kAdamEps)).epsilon(1e-12));
}

TEST_CASE("spot gradient checks on fused losses") {
    Rng rng(17);
    auto p = make_value(Shape{6});
    std::vector<double> gt{0, 1, 1, 0, 1, 0};
    std::vector<double> w{1.0, 2.0, 1.5, 3.0, 1.0, 2.5};
    for (auto& v : p->data) v = 0.1 + 0.8 * rng.uniform();
    auto rep = grad_check([&](const std::vector<Value>& in) {
        return weighted_bce_raw(in[0], gt, w);
    }, {p});
    CHECK(rep.max_rel_err < 1e-6);
}
