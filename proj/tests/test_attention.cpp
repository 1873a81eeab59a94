#include <doctest.h>

#include "sodkit/attention.hpp"

using namespace sodkit;

namespace {

Value random_tokens(Rng& rng, int b, int n, int c) {
    auto v = make_value(Shape{b, n, c});
    for (auto& d : v->data) d = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("attention weights are a distribution over keys") {
    ParamStore store;
    Rng rng(21);
    AttentionConfig cfg{8, 2, 1};
    MultiHeadAttention attn(store, "attn", cfg, rng);
    auto q = random_tokens(rng, 2, 5, 8);
    auto kv = random_tokens(rng, 2, 3, 8);
    Value scores;
    auto out = attn.forward(q, kv, &scores);
    REQUIRE(out->shape == Shape{2, 5, 8});
    REQUIRE(scores->shape == Shape{4, 5, 3});  // B*heads rows of N x M weights
    for (int row = 0; row < 4 * 5; ++row) {
        double s = 0;
        for (int m = 0; m < 3; ++m) s += scores->data[row * 3 + m];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        for (int m = 0; m < 3; ++m) CHECK(scores->data[row * 3 + m] >= 0.0);
    }
}

TEST_CASE("attention is equivariant to query order and invariant to key order") {
    ParamStore store;
    Rng rng(22);
    AttentionConfig cfg{8, 2, 1};
    MultiHeadAttention attn(store, "attn", cfg, rng);
    auto q = random_tokens(rng, 1, 4, 8);
    auto kv = random_tokens(rng, 1, 4, 8);
    auto base = attn.forward(q, kv);

    // reverse the query tokens: outputs must follow the same permutation
    auto qr = make_value(q->shape);
    for (int n = 0; n < 4; ++n)
        std::copy(q->data.begin() + n * 8, q->data.begin() + (n + 1) * 8,
                  qr->data.begin() + (3 - n) * 8);
    auto perm_out = attn.forward(qr, kv);
    for (int n = 0; n < 4; ++n)
        for (int c = 0; c < 8; ++c)
            CHECK(perm_out->data[(3 - n) * 8 + c] ==
                  doctest::Approx(base->data[n * 8 + c]).epsilon(1e-10));

    // reverse the key/value tokens: outputs must be unchanged
    auto kvr = make_value(kv->shape);
    for (int n = 0; n < 4; ++n)
        std::copy(kv->data.begin() + n * 8, kv->data.begin() + (n + 1) * 8,
                  kvr->data.begin() + (3 - n) * 8);
    auto inv_out = attn.forward(q, kvr);
    for (size_t i = 0; i < base->data.size(); ++i)
        CHECK(inv_out->data[i] == doctest::Approx(base->data[i]).epsilon(1e-10));
}

TEST_CASE("spatial reduce shrinks the token count by r^2") {
    ParamStore store;
    Rng rng(23);
    SpatialReduce red(store, "red", 6, 2, rng);
    auto x = random_tokens(rng, 2, 16, 6);  // 4x4 grid
    auto y = red.forward(x, 4, 4);
    REQUIRE(y->shape == Shape{2, 4, 6});
    CHECK_THROWS_AS(red.forward(random_tokens(rng, 1, 9, 6), 3, 3), DimensionError);
}

TEST_CASE("reduced attention shrinks the score matrix") {
    ParamStore store;
    Rng rng(24);
    AttentionConfig cfg{8, 2, 2};
    TransformerBlock block(store, "blk", cfg, /*reduced=*/true, rng);
    auto x = random_tokens(rng, 1, 64, 8);  // 8x8 grid
    Value scores;
    auto y = block.forward(x, 8, 8, &scores);
    CHECK(y->shape == x->shape);
    REQUIRE(scores->shape == Shape{2, 64, 16});  // keys reduced 64 -> 16

    AttentionConfig full{8, 2, 1};
    TransformerBlock block2(store, "blk2", full, /*reduced=*/true, rng);
    Value scores2;
    block2.forward(x, 8, 8, &scores2);
    CHECK(scores2->shape == Shape{2, 64, 64});
}

TEST_CASE("transformer block keeps shape and batches independently") {
    ParamStore store;
    Rng rng(25);
    AttentionConfig cfg{8, 2, 2};
    TransformerBlock block(store, "blk", cfg, /*reduced=*/true, rng);
    auto a = random_tokens(rng, 1, 16, 8);
    auto b = random_tokens(rng, 1, 16, 8);
    auto both = make_value(Shape{2, 16, 8});
    std::copy(a->data.begin(), a->data.end(), both->data.begin());
    std::copy(b->data.begin(), b->data.end(), both->data.begin() + a->data.size());
    auto ya = block.forward(a, 4, 4);
    auto yb = block.forward(b, 4, 4);
    auto yboth = block.forward(both, 4, 4);
    for (size_t i = 0; i < ya->data.size(); ++i) {
        CHECK(yboth->data[i] == doctest::Approx(ya->data[i]).epsilon(1e-12));
        CHECK(yboth->data[ya->data.size() + i] ==
              doctest::Approx(yb->data[i]).epsilon(1e-12));
    }
}

TEST_CASE("head divisibility is validated") {
    AttentionConfig bad{9, 2, 1};
    CHECK_THROWS_AS(bad.head_dim(), ConfigError);
}
