#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "textguard/autodiff.hpp"
#include "textguard/numeric.hpp"

using namespace textguard;
using autodiff::Tape;
using autodiff::Var;
using numeric::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, numeric::Prng& prng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.flat(i) = prng.uniform(lo, hi);
    return t;
}

// Checks the tape gradient of x in loss = mean(weights .* op(x))
// against central finite differences at 20 random points.
void check_grad(const std::function<Var(Tape&, Var)>& op, const std::vector<std::size_t>& shape,
                std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    numeric::Prng prng(seed);
    for (int point = 0; point < 20; ++point) {
        Tensor x = random_tensor(shape, prng, lo, hi);

        Tensor weights;  // fixed per point; shaped like op output
        {
            Tape probe;
            Tensor xc = x;
            Var out = op(probe, probe.param(&xc));
            weights = random_tensor(probe.value(out).shape(), prng);
        }

        auto scalar = [&](const Tensor& at) {
            Tape t;
            Tensor xc = at;
            Var out = op(t, t.param(&xc));
            return t.value(t.mean_all(t.mul_const(out, weights))).flat(0);
        };

        Tape t;
        Tensor xc = x;
        Var leaf = t.param(&xc);
        Var loss = t.mean_all(t.mul_const(op(t, leaf), weights));
        t.backward(loss);
        Tensor analytic = t.grad_for(&xc);
        Tensor fd = numeric::finite_diff_grad(scalar, x);

        for (std::size_t i = 0; i < x.size(); ++i) {
            double err = numeric::gradient_rel_error(analytic.flat(i), fd.flat(i));
            CHECK(err < 1e-4);
        }
    }
}

}  // namespace

TEST_CASE("backward: matmul, both operands") {
    numeric::Prng prng(1);
    Tensor fixed = random_tensor({4, 3}, prng);
    check_grad([&](Tape& t, Var x) { return t.matmul(x, t.constant(fixed)); }, {2, 4}, 101);
    Tensor left = random_tensor({2, 4}, prng);
    check_grad([&](Tape& t, Var x) { return t.matmul(t.constant(left), x); }, {4, 3}, 102);
}

TEST_CASE("backward: add / add_row / mul / scale") {
    numeric::Prng prng(2);
    Tensor other = random_tensor({3, 4}, prng);
    check_grad([&](Tape& t, Var x) { return t.add(x, t.constant(other)); }, {3, 4}, 103);
    check_grad([&](Tape& t, Var x) { return t.mul(x, t.constant(other)); }, {3, 4}, 104);
    check_grad([&](Tape& t, Var x) { return t.scale(x, -2.5); }, {3, 4}, 105);

    Tensor bias = random_tensor({4}, prng);
    check_grad([&](Tape& t, Var x) { return t.add_row(x, t.constant(bias)); }, {3, 4}, 106);
    Tensor mat = random_tensor({3, 4}, prng);
    check_grad([&](Tape& t, Var x) { return t.add_row(t.constant(mat), x); }, {4}, 107);

    Tensor rows = Tensor::vector({1.0, 0.0, 1.0});
    check_grad([&](Tape& t, Var x) { return t.scale_rows(x, rows); }, {3, 4}, 108);
}

TEST_CASE("backward: elementwise activations") {
    check_grad([](Tape& t, Var x) { return t.sigmoid(x); }, {3, 3}, 109, -3.0, 3.0);
    check_grad([](Tape& t, Var x) { return t.tanh(x); }, {3, 3}, 110, -3.0, 3.0);
    check_grad([](Tape& t, Var x) { return t.relu(x); }, {3, 3}, 111, -3.0, 3.0);
    check_grad([](Tape& t, Var x) { return t.gelu(x); }, {3, 3}, 112, -3.0, 3.0);
}

TEST_CASE("backward: masked softmax") {
    Tensor mask({3, 5});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) mask(i, j) = (j == 4 && i != 0) ? 0.0 : 1.0;
    check_grad([&](Tape& t, Var x) { return t.softmax_rows_masked(x, mask); }, {3, 5}, 113, -2.0,
               2.0);
}

TEST_CASE("masked softmax zeroes masked keys and renormalizes") {
    Tape t;
    Tensor mask = Tensor::matrix(1, 3, {1.0, 0.0, 1.0});
    Tensor x = Tensor::matrix(1, 3, {0.3, 99.0, 0.3});
    Var y = t.softmax_rows_masked(t.constant(x), mask);
    CHECK(t.value(y)(0, 1) == 0.0);
    CHECK(t.value(y)(0, 0) == doctest::Approx(0.5));
    CHECK(t.value(y)(0, 2) == doctest::Approx(0.5));

    // fully masked row stays all zero
    Tensor zmask = Tensor::matrix(1, 3, {0.0, 0.0, 0.0});
    Var z = t.softmax_rows_masked(t.constant(x), zmask);
    for (std::size_t j = 0; j < 3; ++j) CHECK(t.value(z)(0, j) == 0.0);
}

TEST_CASE("backward: layer norm over x, gain and bias") {
    numeric::Prng prng(3);
    Tensor gain = random_tensor({6}, prng, 0.5, 1.5);
    Tensor bias = random_tensor({6}, prng);
    check_grad(
        [&](Tape& t, Var x) {
            return t.layer_norm_rows(x, t.constant(gain), t.constant(bias));
        },
        {4, 6}, 114, -2.0, 2.0);
    Tensor xmat = random_tensor({4, 6}, prng);
    check_grad(
        [&](Tape& t, Var g) {
            return t.layer_norm_rows(t.constant(xmat), g, t.constant(bias));
        },
        {6}, 115, 0.5, 1.5);
    check_grad(
        [&](Tape& t, Var b) {
            return t.layer_norm_rows(t.constant(xmat), t.constant(gain), b);
        },
        {6}, 116);
}

TEST_CASE("layer norm output is standardized before gain/bias") {
    numeric::Prng prng(4);
    Tape t;
    Tensor x = random_tensor({5, 8}, prng, -3.0, 3.0);
    Tensor gain = Tensor::full({8}, 1.0);
    Tensor bias = Tensor::zeros({8});
    Var y = t.layer_norm_rows(t.constant(x), t.constant(gain), t.constant(bias));
    const Tensor& yv = t.value(y);
    for (std::size_t i = 0; i < 5; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 8; ++j) mean += yv(i, j);
        mean /= 8.0;
        for (std::size_t j = 0; j < 8; ++j) var += (yv(i, j) - mean) * (yv(i, j) - mean);
        var /= 8.0;
        CHECK(std::fabs(mean) < 1e-10);
        CHECK(std::fabs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("backward: structural ops") {
    check_grad([](Tape& t, Var x) { return t.transpose(x); }, {3, 4}, 117);
    check_grad([](Tape& t, Var x) { return t.slice_rows(x, 1, 3); }, {4, 3}, 118);
    check_grad([](Tape& t, Var x) { return t.slice_cols(x, 0, 2); }, {3, 5}, 119);
    numeric::Prng prng(5);
    Tensor other = random_tensor({2, 3}, prng);
    check_grad([&](Tape& t, Var x) { return t.concat_rows({x, t.constant(other)}); }, {2, 3}, 120);
    Tensor wide = random_tensor({2, 4}, prng);
    check_grad([&](Tape& t, Var x) { return t.concat_cols({t.constant(wide), x}); }, {2, 2}, 121);
    // duplicate gather indices must accumulate
    check_grad([](Tape& t, Var x) { return t.gather_rows(x, {0, 2, 2, 1}); }, {4, 3}, 122);
}

TEST_CASE("backward: bce loss") {
    numeric::Prng prng(6);
    for (int point = 0; point < 20; ++point) {
        Tensor y({4, 1});
        for (std::size_t i = 0; i < 4; ++i) y(i, 0) = prng.next_below(2);
        Tensor p = random_tensor({4, 1}, prng, 0.05, 0.95);

        auto scalar = [&](const Tensor& at) {
            Tape t;
            Tensor pc = at;
            return t.value(t.bce_loss(t.param(&pc), y)).flat(0);
        };
        Tape t;
        Tensor pc = p;
        Var loss = t.bce_loss(t.param(&pc), y);
        t.backward(loss);
        Tensor analytic = t.grad_for(&pc);
        Tensor fd = numeric::finite_diff_grad(scalar, p);
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(numeric::gradient_rel_error(analytic.flat(i), fd.flat(i)) < 1e-4);
        }
    }
}

TEST_CASE("chained graph: logistic-style composite") {
    numeric::Prng prng(7);
    Tensor x = random_tensor({5, 3}, prng);
    Tensor y({5, 1});
    for (std::size_t i = 0; i < 5; ++i) y(i, 0) = prng.next_below(2);

    auto scalar = [&](const Tensor& w) {
        Tape t;
        Tensor wc = w;
        Var probs = t.sigmoid(t.matmul(t.constant(x), t.param(&wc)));
        return t.value(t.bce_loss(probs, y)).flat(0);
    };
    Tensor w = random_tensor({3, 1}, prng);
    Tape t;
    Tensor wc = w;
    Var probs = t.sigmoid(t.matmul(t.constant(x), t.param(&wc)));
    Var loss = t.bce_loss(probs, y);
    t.backward(loss);
    Tensor analytic = t.grad_for(&wc);
    Tensor fd = numeric::finite_diff_grad(scalar, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(numeric::gradient_rel_error(analytic.flat(i), fd.flat(i)) < 1e-4);
    }
}

TEST_CASE("param nodes are shared and unused params get zero grads") {
    Tape t;
    Tensor w = Tensor::vector({2.0});
    Var a = t.param(&w);
    Var b = t.param(&w);
    CHECK(a.id == b.id);

    Tensor unused = Tensor::vector({1.0});
    Var loss = t.mean_all(t.mul(a, a));
    t.backward(loss);
    CHECK(t.grad_for(&w)(0) == doctest::Approx(4.0));  // d(w^2)/dw = 2w
    Tensor zg = t.grad_for(&unused);
    CHECK(zg(0) == 0.0);
}

TEST_CASE("tape rejects double backward and non-scalar loss") {
    Tape t;
    Tensor w = Tensor::vector({1.0, 2.0});
    Var a = t.param(&w);
    CHECK_THROWS(t.backward(a));  // not scalar
    Tape t2;
    Tensor v = Tensor::vector({1.0});
    Var b = t2.param(&v);
    Var loss = t2.mean_all(b);
    t2.backward(loss);
    CHECK_THROWS(t2.backward(loss));
}
