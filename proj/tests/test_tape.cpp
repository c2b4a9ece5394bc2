#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sgf/grad_check.hpp"
#include "sgf/ops.hpp"

using namespace sgf;

namespace {

/// Elementwise square with a configurable (possibly wrong) derivative factor.
VarId square(Tape<double>& tape, VarId x, double factor = 2.0) {
    TensorD out = tape.value(x);
    for (auto& v : out.data()) v *= v;
    return tape.record(std::move(out), {x}, [factor](const BackwardContext<double>& ctx) {
        if (auto* g = ctx.grad_input(0))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += factor * ctx.input(0)[i] * ctx.grad_output()[i];
    });
}

}  // namespace

TEST_CASE("d(x*x)/dx at 3 is 6") {
    Tape<double> tape;
    const VarId x = tape.variable(TensorD::scalar(3.0));
    const VarId y = mul(tape, x, x);
    const auto grads = tape.backward(y);
    CHECK(grads[x][0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("gradients are linear in the loss") {
    Rng rng(1);
    const TensorD a0 = testing::random_tensor(rng, {5});
    const TensorD b0 = testing::random_tensor(rng, {5});
    auto grad_of = [&](double ca, double cb) {
        Tape<double> tape;
        const VarId a = tape.variable(a0);
        const VarId b = tape.variable(b0);
        const VarId la = sum(tape, mul(tape, a, b));
        const VarId lb = sum(tape, mul(tape, a, a));
        const VarId loss = add(tape, scale(tape, la, ca), scale(tape, lb, cb));
        return tape.backward(loss)[a];
    };
    const TensorD g1 = grad_of(1.0, 0.0), g2 = grad_of(0.0, 1.0), g12 = grad_of(2.5, -1.5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(g12[i] - (2.5 * g1[i] - 1.5 * g2[i])) <= 1e-10);
}

TEST_CASE("unused leaves receive zero gradients; constants receive none") {
    Tape<double> tape;
    const VarId used = tape.variable(TensorD(Shape{3}, 2.0));
    const VarId unused = tape.variable(TensorD(Shape{2, 2}, 1.0));
    const VarId c = tape.constant(TensorD(Shape{3}, 4.0));
    const auto grads = tape.backward(sum(tape, mul(tape, used, c)));
    REQUIRE(grads.contains(unused));
    CHECK(grads[unused].shape() == Shape{2, 2});
    for (double v : grads[unused].data()) CHECK(v == 0.0);
    CHECK_FALSE(grads.contains(c));
    for (double v : grads[used].data()) CHECK(v == 4.0);
}

TEST_CASE("shared subexpressions accumulate gradients") {
    Tape<double> tape;
    const VarId x = tape.variable(TensorD::scalar(1.5));
    const VarId y = add(tape, mul(tape, x, x), scale(tape, x, 3.0));  // x^2 + 3x
    CHECK(tape.backward(y)[x][0] == doctest::Approx(2 * 1.5 + 3.0));
}

TEST_CASE("backward rejects non-scalar losses and foreign ids") {
    Tape<double> tape;
    const VarId x = tape.variable(TensorD(Shape{2}, 1.0));
    CHECK_THROWS_AS(tape.backward(x), Error);
    CHECK_THROWS_AS(tape.backward(VarId{99}), Error);
}

TEST_CASE("grad_check passes on identity and softmax") {
    Rng rng(2);
    const auto id = grad_check([](Tape<double>& t, const std::vector<VarId>& in) { return scale(t, in[0], 1.0); },
                               {testing::random_tensor(rng, {4, 3})});
    CHECK(id.passed);
    CHECK(id.checked == 12);
    const auto sm = grad_check([](Tape<double>& t, const std::vector<VarId>& in) { return softmax(t, in[0]); },
                               {testing::random_tensor(rng, {3, 5}, -2.0, 2.0)});
    CHECK(sm.passed);
    CHECK(sm.max_error <= 1e-4);
}

TEST_CASE("grad_check catches a corrupted backward rule") {
    Rng rng(3);
    const TensorD x = testing::away_from_zero(rng, {6});
    CHECK(grad_check([](Tape<double>& t, const std::vector<VarId>& in) { return square(t, in[0]); }, {x}).passed);
    const auto bad =
        grad_check([](Tape<double>& t, const std::vector<VarId>& in) { return square(t, in[0], 2.2); }, {x});
    CHECK_FALSE(bad.passed);
    CHECK(bad.max_error > 1e-2);
}
