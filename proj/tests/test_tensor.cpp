#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sgf/tensor.hpp"

using namespace sgf;

TEST_CASE("tensor construction and indexing") {
    TensorF t(Shape{2, 3, 4}, 1.5f);
    CHECK(t.rank() == 3);
    CHECK(t.size() == 24);
    CHECK(t.at({1, 2, 3}) == 1.5f);
    t.at({1, 0, 2}) = 7.0f;
    CHECK(t[1 * 12 + 0 * 4 + 2] == 7.0f);
    CHECK_THROWS_AS(t.at({2, 0, 0}), Error);
    CHECK_THROWS_AS(t.at({0, 0}), Error);
    CHECK_THROWS_AS(TensorF(Shape{2, 2}, std::vector<float>{1, 2, 3}), Error);
    CHECK(TensorD::scalar(3.0).shape() == Shape{1});
}

TEST_CASE("reshape keeps data and rejects size changes") {
    TensorD t(Shape{2, 3}, std::vector<double>{0, 1, 2, 3, 4, 5});
    const TensorD r = t.reshaped({3, 2});
    CHECK(r.at({2, 1}) == 5.0);
    CHECK_THROWS_AS(t.reshaped({4, 2}), Error);
    try {
        (void)t.reshaped({7});
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ShapeMismatch);
    }
}

TEST_CASE("cast and finiteness") {
    TensorD t(Shape{3}, std::vector<double>{0.5, -1.25, 2.0});
    const TensorF f = t.cast<float>();
    CHECK(f[1] == -1.25f);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng streams are reproducible and seed-dependent") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs |= x != c.next_u64();
    }
    CHECK(differs);
    Rng d(5);
    const auto saved = d.state();
    const double first = d.uniform();
    d.set_state(saved);
    CHECK(d.uniform() == first);
}

TEST_CASE("rng uniform, below and normal moments") {
    Rng rng(9);
    double sum = 0.0, sum2 = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const auto k = rng.below(7);
        REQUIRE(k < 7);
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
    CHECK_THROWS_AS(rng.below(0), Error);
}

TEST_CASE("he_normal_init standard deviation matches sqrt(2 / fan_in) within 2%") {
    Rng rng(123);
    const std::size_t fan_in = 3 * 3 * 16;
    const TensorF w = he_normal_init<float>(rng, Shape{100000}, fan_in);
    double sum = 0.0, sum2 = 0.0;
    for (float v : w.data()) {
        sum += v;
        sum2 += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(w.size());
    const double mean = sum / n;
    const double stddev = std::sqrt(sum2 / n - mean * mean);
    const double expected = std::sqrt(2.0 / fan_in);
    CHECK(std::abs(stddev - expected) / expected < 0.02);
    CHECK_THROWS_AS(he_normal_init<float>(rng, Shape{4}, 0), Error);
}

TEST_CASE("shape helpers") {
    CHECK(numel(Shape{}) == 1);
    CHECK(numel(Shape{2, 0, 3}) == 0);
    CHECK(to_string(Shape{32, 32, 128}) == "[32, 32, 128]");
}
