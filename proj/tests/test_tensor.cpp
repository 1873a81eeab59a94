#include <doctest.h>

#include "sodkit/ops.hpp"

using namespace sodkit;

TEST_CASE("make_value checks shape/data consistency") {
    auto v = make_value(Shape{2, 3});
    CHECK(v->size() == 6);
    CHECK(v->data.size() == 6);
    CHECK_THROWS_AS(make_value(Shape{2, 3}, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("backward through a small chain") {
    auto x = make_value(Shape{3}, {1.0, 2.0, 3.0}, true);
    auto y = make_value(Shape{3}, {4.0, 5.0, 6.0}, true);
    auto z = sum_all(mul(add(x, y), x));  // sum(x^2 + xy)
    backward(z);
    for (int i = 0; i < 3; ++i) {
        CHECK(x->grad[i] == doctest::Approx(2 * x->data[i] + y->data[i]).epsilon(1e-12));
        CHECK(y->grad[i] == doctest::Approx(x->data[i]).epsilon(1e-12));
    }
}

TEST_CASE("diamond graph accumulates both paths") {
    auto x = make_value(Shape{1}, {3.0}, true);
    auto a = affine(x, 2.0, 0.0);
    auto b = affine(x, 5.0, 1.0);
    auto z = sum_all(add(a, b));
    backward(z);
    CHECK(x->grad[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("node reused twice contributes twice") {
    auto x = make_value(Shape{2}, {1.5, -2.0}, true);
    auto z = sum_all(mul(x, x));
    backward(z);
    CHECK(x->grad[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(x->grad[1] == doctest::Approx(-4.0).epsilon(1e-15));
}

TEST_CASE("backward seed validation") {
    auto x = make_value(Shape{2}, {1.0, 2.0}, true);
    auto y = add(x, x);
    // non-scalar root needs an explicit seed
    CHECK_THROWS_AS(backward(y), DimensionError);
    std::vector<double> bad_seed{1.0};
    CHECK_THROWS_AS(backward(y, &bad_seed), DimensionError);
    std::vector<double> seed{1.0, 0.5};
    backward(y, &seed);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(1.0));
}

TEST_CASE("leaves without requires_grad stay untouched") {
    auto x = make_value(Shape{2}, {1.0, 2.0}, true);
    auto c = make_value(Shape{2}, {3.0, 4.0}, false);
    auto z = sum_all(mul(x, c));
    backward(z);
    CHECK(c->grad.empty());
    CHECK(x->grad[0] == doctest::Approx(3.0));
}

TEST_CASE("deep chain does not overflow the stack") {
    auto x = make_value(Shape{1}, {1.0}, true);
    Value v = x;
    for (int i = 0; i < 20000; ++i) v = affine(v, 1.0, 0.0);
    backward(sum_all(v));
    CHECK(x->grad[0] == doctest::Approx(1.0));
}
