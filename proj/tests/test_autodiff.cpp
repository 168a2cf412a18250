#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "advtrain/grad_check.hpp"
#include "advtrain/ops.hpp"
#include "advtrain/rng.hpp"
#include "advtrain/tape.hpp"
#include "advtrain/tensor.hpp"

using namespace advtrain;
namespace o = advtrain::ops;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-2.0, 2.0);
    return t;
}

}  // namespace

TEST_CASE("tensor construction and checks") {
    CHECK(Tensor().is_scalar());
    CHECK(Tensor::zeros({2, 3}).size() == 6);
    CHECK(shape_string({2, 3}) == "[2, 3]");
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::vector({1.0, 2.0}).item(), std::invalid_argument);
    CHECK(Tensor::matrix({{1, 2}, {3, 4}}).reshaped({4}).shape() == Shape{4});

    Tensor pos = Tensor::scalar(0.0), neg = Tensor::scalar(-0.0);
    CHECK(pos == neg);
    CHECK_FALSE(bitwise_equal(pos, neg));
}

TEST_CASE("matmul by hand") {
    Tape t;
    Var y = o::matmul(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), t.constant(Tensor::matrix({{1}, {1}})));
    CHECK(y.value() == Tensor::matrix({{3}, {7}}));
}

TEST_CASE("log_softmax of equal logits is -ln 2") {
    Tape t;
    Var y = o::log_softmax(t.constant(Tensor::vector({0.0, 0.0})));
    CHECK(y.value()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(y.value()[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("relu gate in backward") {
    Tape t;
    Var x = t.parameter(Tensor::vector({-1.0, 2.0}));
    t.backward(o::sum(o::relu(x)));
    CHECK(t.grad(x) == Tensor::vector({0.0, 1.0}));
}

TEST_CASE("x*x at 3 has gradient 6, and repeated backward accumulates") {
    Tape t;
    Var x = t.parameter(Tensor::scalar(3.0));
    Var loss = o::mul(x, x);
    t.backward(loss);
    CHECK(t.grad(x).item() == 6.0);
    t.backward(loss);
    CHECK(t.grad(x).item() == 12.0);
    t.zero_grad();
    CHECK(t.grad(x).item() == 0.0);
}

TEST_CASE("NLL over log_softmax has gradient softmax - onehot") {
    const std::vector<double> logits{0.3, -1.2, 2.0};
    const int label = 1;
    Tape t;
    Var z = t.parameter(Tensor({1, 3}, logits));
    const int idx[] = {label};
    t.backward(o::scale(o::sum(o::pick(o::log_softmax(z), idx)), -1.0));

    double denom = 0.0;
    for (double v : logits) denom += std::exp(v);
    const Tensor g = t.grad(z);
    for (int c = 0; c < 3; ++c) {
        const double expected = std::exp(logits[c]) / denom - (c == label ? 1.0 : 0.0);
        CHECK(g[c] == doctest::Approx(expected).epsilon(1e-14));
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape t;
    Var x = t.parameter(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(t.backward(o::relu(x)), std::invalid_argument);
}

TEST_CASE("shape mismatch diagnostics name both shapes") {
    Tape t;
    Var a = t.constant(Tensor::zeros({2, 3}));
    Var b = t.constant(Tensor::zeros({3, 2}));
    try {
        o::add(a, b);
        FAIL("expected a throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(o::matmul(a, a), std::invalid_argument);
}

TEST_CASE("log rejects non-positive input") {
    Tape t;
    CHECK_THROWS_AS(o::log(t.constant(Tensor::vector({1.0, 0.0}))), std::domain_error);
    CHECK_THROWS_AS(o::log(t.constant(Tensor::vector({-1.0}))), std::domain_error);
}

TEST_CASE("gather_rows matches a naive loop and rejects bad ids") {
    Rng rng(5);
    const Tensor table = random_tensor(rng, {6, 4});
    const std::vector<int> ids{5, 0, 0, 3, 2, 5};
    Tape t;
    Var g = o::gather_rows(t.constant(table), ids, {2, 3});
    REQUIRE(g.shape() == Shape{2, 3, 4});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t d = 0; d < 4; ++d) CHECK(g.value()[i * 4 + d] == table[ids[i] * 4 + d]);

    const std::vector<int> bad{6};
    CHECK_THROWS_AS(o::gather_rows(t.constant(table), bad, {1}), std::out_of_range);
    const std::vector<int> negative{-1};
    CHECK_THROWS_AS(o::gather_rows(t.constant(table), negative, {1}), std::out_of_range);
}

TEST_CASE("softmax rows sum to one and agree with exp(log_softmax)") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor z = random_tensor(rng, {3, 5});
        z[0] += 600.0;  // large logits stay finite
        Tape t;
        Var x = t.constant(z);
        const Tensor p = o::softmax(x).value();
        const Tensor lp = o::log_softmax(x).value();
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 5; ++c) {
                s += p[r * 5 + c];
                CHECK(std::abs(std::exp(lp[r * 5 + c]) - p[r * 5 + c]) <= 1e-12);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
        CHECK(lp.all_finite());
    }
}

TEST_CASE("dropout: rate 0 is identity, otherwise inverted scaling with a saved mask") {
    Rng rng(1);
    const Tensor x = random_tensor(rng, {4, 6});
    Tape t;
    Rng unused(9);
    const Rng before = unused;
    CHECK(bitwise_equal(o::dropout(t.constant(x), 0.0, unused).value(), x));
    Rng after_copy = before;
    CHECK(unused.next_u64() == after_copy.next_u64());

    Rng mask_rng(4);
    Var p = t.parameter(x);
    Var y = o::dropout(p, 0.5, mask_rng);
    t.backward(o::sum(y));
    const Tensor g = t.grad(p);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool kept = y.value()[i] != 0.0;
        CHECK(y.value()[i] == (kept ? x[i] * 2.0 : 0.0));
        CHECK(g[i] == (kept ? 2.0 : 0.0));
    }
    CHECK_THROWS_AS(o::dropout(p, 1.0, mask_rng), std::invalid_argument);
}

TEST_CASE("masked_mean_pool skips masked positions") {
    Tape t;
    Tensor x({1, 3, 2}, {1, 2, 3, 4, 1000, -1000});
    Tensor mask({1, 3}, {1, 1, 0});
    CHECK(o::masked_mean_pool(t.constant(x), mask).value() == Tensor({1, 2}, {2.0, 3.0}));
    Tensor none({1, 3}, {0, 0, 0});
    CHECK(o::masked_mean_pool(t.constant(x), none).value() == Tensor({1, 2}, {0.0, 0.0}));
}

TEST_CASE("kl_to_reference: zero and zero gradient for identical distributions") {
    Rng rng(2);
    const Tensor z = random_tensor(rng, {4, 3});
    const Tensor ref = o::log_softmax_values(z);
    Tape t;
    Var x = t.parameter(z);
    Var kl = o::kl_to_reference(x, ref);
    for (double v : kl.value().data()) CHECK(v == 0.0);
    t.backward(o::sum(kl));
    const Tensor g = t.grad(x);
    for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("backward is deterministic and linear") {
    Rng rng(17);
    const Tensor a = random_tensor(rng, {3, 4});
    const Tensor w = random_tensor(rng, {4, 2});
    auto grads = [&](double ca, double cb) {
        Tape t;
        Var x = t.parameter(a);
        Var h = o::matmul(o::tanh(x), t.constant(w));
        Var f = o::sum(o::exp(o::scale(h, 0.3)));
        Var g = o::mean(o::log_softmax(h));
        t.backward(o::add(o::scale(f, ca), o::scale(g, cb)));
        return t.grad(x);
    };
    CHECK(bitwise_equal(grads(1.0, 0.0), grads(1.0, 0.0)));
    const Tensor gf = grads(1.0, 0.0), gg = grads(0.0, 1.0), combo = grads(2.5, -0.7);
    for (std::size_t i = 0; i < combo.size(); ++i) CHECK(std::abs(combo[i] - (2.5 * gf[i] - 0.7 * gg[i])) <= 1e-12);
}

TEST_CASE("grad_check: sum has zero error") {
    Rng rng(3);
    const auto report = grad_check([](Tape&, Var x) { return o::sum(x); }, random_tensor(rng, {3, 3}));
    CHECK(report.passed);
    CHECK(report.max_error <= 1e-9);
}

TEST_CASE("grad_check: random two-layer net, every leaf") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<Tensor> points{random_tensor(rng, {2, 3}), random_tensor(rng, {3, 4}),
                                         random_tensor(rng, {4}), random_tensor(rng, {4, 2})};
        const std::vector<int> labels{static_cast<int>(rng.below(2)), static_cast<int>(rng.below(2))};
        auto f = [&](Tape&, std::span<const Var> v) {
            Var h = o::tanh(o::add_bias(o::matmul(v[0], v[1]), v[2]));
            Var z = o::matmul(h, v[3]);
            return o::scale(o::mean(o::pick(o::log_softmax(z), labels)), -1.0);
        };
        const auto report = grad_check(f, points);
        CHECK(report.passed);
    }
}

TEST_CASE("grad_check: wrong backward rule fails, non-scalar output rejected") {
    Rng rng(8);
    auto wrong_square = [](Tape& tape, Var x) {
        Tensor y = x.value();
        for (double& v : y.data()) v = v * v;
        Var sq = tape.record(std::move(y), {x}, [](const BackwardArgs& a) {
            for (std::size_t i = 0; i < a.grad_inputs[0].size(); ++i)
                a.grad_inputs[0][i] += a.grad_output[i] * (*a.inputs[0])[i];  // should be 2x
        });
        return o::sum(sq);
    };
    CHECK_FALSE(grad_check(wrong_square, random_tensor(rng, {4})).passed);
    CHECK_THROWS_AS(grad_check([](Tape&, Var x) { return o::tanh(x); }, random_tensor(rng, {2})),
                    std::invalid_argument);
}

TEST_CASE("gradient_error switches to absolute for tiny magnitudes") {
    CHECK(gradient_error(1.0, 1.0) == 0.0);
    CHECK(gradient_error(2.0, 1.0) == doctest::Approx(0.5));
    CHECK(gradient_error(1e-9, 5e-9) == doctest::Approx(4e-9));
}

TEST_CASE("rng streams are reproducible and distinct") {
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.below(7) == b.below(7));
    std::vector<int> v{0, 1, 2, 3, 4, 5};
    Rng s(3);
    s.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5});
}
