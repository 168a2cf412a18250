#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "advtrain/checkpoint.hpp"
#include "advtrain/grad_check.hpp"
#include "advtrain/model.hpp"
#include "advtrain/ops.hpp"
#include "support.hpp"

using namespace advtrain;

namespace {

TokenBatch ranking_batch(Rng& rng, std::size_t vocab, std::size_t batch = 3, std::size_t options = 4,
                         std::size_t seq = 5) {
    TokenBatch b;
    b.task = TaskKind::RelevanceRanking;
    b.batch = batch;
    b.options = options;
    b.seq_len = seq;
    for (std::size_t r = 0; r < batch * options; ++r) {
        const std::size_t live = 1 + rng.below(seq);
        for (std::size_t t = 0; t < seq; ++t) {
            b.tokens.push_back(t < live ? static_cast<int>(1 + rng.below(vocab - 1)) : 0);
            b.pad_mask.push_back(t < live ? 1 : 0);
        }
    }
    for (std::size_t i = 0; i < batch; ++i) b.labels.push_back(static_cast<int>(rng.below(options)));
    return b;
}

TokenBatch pairwise_batch(Rng& rng, std::size_t vocab, std::size_t rows = 4, std::size_t seq = 5) {
    TokenBatch b;
    b.task = TaskKind::PairwiseClassification;
    b.batch = rows;
    b.seq_len = seq;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < seq; ++t) {
            b.tokens.push_back(static_cast<int>(1 + rng.below(vocab - 1)));
            b.pad_mask.push_back(1);
        }
        b.labels.push_back(static_cast<int>(rng.below(2)));
        b.group_ids.push_back(static_cast<int>(r / 2));
    }
    return b;
}

ModelParams zero_model(std::size_t vocab, std::size_t dim) {
    Rng rng(1);
    ModelParams p = testing::tiny_model(rng, vocab, dim);
    for (Tensor* t : p.tensors())
        for (double& v : t->data()) v = 0.0;
    return p;
}

}  // namespace

TEST_CASE("embed: identity table lookup and repeated tokens") {
    ModelParams p = zero_model(2, 2);
    p.embedding = Tensor::matrix({{1, 0}, {0, 1}});
    TokenBatch b;
    b.task = TaskKind::PairwiseClassification;
    b.batch = 1;
    b.seq_len = 3;
    b.tokens = {0, 1, 0};
    b.pad_mask = {1, 1, 1};
    b.group_ids = {0};
    const EmbeddedBatch e = embed(p, b);
    CHECK(e.embeddings == Tensor({1, 3, 2}, {1, 0, 0, 1, 1, 0}));
    CHECK(e.source == &b);
}

TEST_CASE("embed: full batch equals a naive gather; bad ids rejected") {
    Rng rng(4);
    ModelParams p = testing::tiny_model(rng, 11, 3);
    TokenBatch b = ranking_batch(rng, 11);
    const Tensor e = embed(p, b).embeddings;
    REQUIRE(e.shape() == Shape{3, 4, 5, 3});
    for (std::size_t i = 0; i < b.tokens.size(); ++i)
        for (std::size_t d = 0; d < 3; ++d) CHECK(e[i * 3 + d] == p.embedding[b.tokens[i] * 3 + d]);

    b.tokens[2] = 11;
    CHECK_THROWS(embed(p, b));
}

TEST_CASE("forward: zero delta matches no delta bitwise; wrong delta shape rejected") {
    Rng rng(6);
    ModelParams p = testing::tiny_model(rng, 10, 3, Activation::Relu);
    const TokenBatch b = ranking_batch(rng, 10);
    const EmbeddedBatch e = embed(p, b);
    const Tensor zero(e.embeddings.shape());
    CHECK(bitwise_equal(forward_from_embeddings(p, e, &zero), forward_from_embeddings(p, e, nullptr)));
    CHECK(bitwise_equal(forward(p, b), forward_from_embeddings(p, e, nullptr)));
    const Tensor wrong({1, 2, 3});
    CHECK_THROWS_AS(forward_from_embeddings(p, e, &wrong), std::invalid_argument);
}

TEST_CASE("forward: zero weights give zero logits") {
    Rng rng(2);
    const ModelParams p = zero_model(10, 3);
    const Tensor rank = forward(p, ranking_batch(rng, 10));
    CHECK(rank.shape() == Shape{3, 4});
    CHECK(rank.max_abs() == 0.0);
    const Tensor pair = forward(p, pairwise_batch(rng, 10));
    CHECK(pair.shape() == Shape{4, 2});
    CHECK(pair.max_abs() == 0.0);
}

TEST_CASE("forward: hand-computed one-unit model responds to delta along the gradient") {
    // embedding dim 1, no encoder; pairwise head w = [-1, 1], b = 0 -> logit gap = 2 * pooled
    ModelParams p;
    p.embedding = Tensor::matrix({{0.0}, {0.5}, {-1.0}});
    p.head_rank = Tensor({1, 1}, {1.0});
    p.head_pair_weight = Tensor({1, 2}, {-1.0, 1.0});
    p.head_pair_bias = Tensor::vector({0.0, 0.0});
    p.dropout_rate = 0.0;
    TokenBatch b;
    b.task = TaskKind::PairwiseClassification;
    b.batch = 1;
    b.seq_len = 2;
    b.tokens = {1, 2};
    b.pad_mask = {1, 1};
    b.group_ids = {0};
    const EmbeddedBatch e = embed(p, b);
    const Tensor clean = forward_from_embeddings(p, e, nullptr);
    CHECK(clean == Tensor({1, 2}, {0.25, -0.25}));  // pooled = -0.25
    const Tensor d({1, 2, 1}, {0.1, 0.1});
    const Tensor moved = forward_from_embeddings(p, e, &d);
    CHECK(moved[0] == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(moved[1] == doctest::Approx(-0.15).epsilon(1e-15));
}

TEST_CASE("forward: eval is deterministic; train with dropout 0 equals eval") {
    Rng rng(8);
    ModelParams p = testing::tiny_model(rng, 10, 3, Activation::Relu, 0.0);
    const TokenBatch b = ranking_batch(rng, 10);
    CHECK(bitwise_equal(forward(p, b), forward(p, b)));
    Rng drop(1);
    CHECK(bitwise_equal(forward(p, b, ForwardOptions{true, &drop}), forward(p, b)));

    p.dropout_rate = 0.5;
    CHECK_THROWS(forward(p, b, ForwardOptions{true, nullptr}));
    Rng d1(3), d2(3);
    CHECK(bitwise_equal(forward(p, b, ForwardOptions{true, &d1}), forward(p, b, ForwardOptions{true, &d2})));
}

TEST_CASE("ranking softmax sums to one; pad positions never change logits") {
    Rng rng(10);
    const ModelParams p = testing::tiny_model(rng, 10, 3, Activation::Relu);
    TokenBatch b = ranking_batch(rng, 10);
    const Tensor probs = [&] {
        Tape t;
        return ops::softmax(t.constant(forward(p, b))).value();
    }();
    for (std::size_t i = 0; i < b.batch; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < b.options; ++o) s += probs[i * b.options + o];
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }

    const Tensor before = forward(p, b);
    for (std::size_t i = 0; i < b.tokens.size(); ++i)
        if (!b.pad_mask[i]) b.tokens[i] = static_cast<int>(1 + rng.below(9));
    CHECK(bitwise_equal(forward(p, b), before));
}

TEST_CASE("loss gradient with respect to the embedded input passes grad_check") {
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelParams p = testing::tiny_model(rng, 8, 3);
        const TokenBatch b = trial % 2 ? ranking_batch(rng, 8) : pairwise_batch(rng, 8);
        auto f = [&](Tape& tape, Var x) {
            BoundParams bp = bind(tape, p, false);
            Var logits = forward_from_embeddings(bp, b, x, std::nullopt, ForwardOptions{});
            return ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), b.labels)), -1.0);
        };
        CHECK(grad_check(f, embed(p, b).embeddings).passed);
    }
}

TEST_CASE("predict: ranking argmax with low-index ties, pairwise by logit order") {
    CHECK(predict(Tensor::matrix({{0.1, 0.3, 0.3}, {2, 1, 0}}), TaskKind::RelevanceRanking) ==
          std::vector<int>{1, 0});
    CHECK(predict(Tensor::matrix({{0.1, 0.2}, {0.2, 0.1}, {0.5, 0.5}}), TaskKind::PairwiseClassification) ==
          std::vector<int>{1, 0, 0});
}

TEST_CASE("batch validation") {
    Rng rng(3);
    TokenBatch b = pairwise_batch(rng, 8);
    CHECK_NOTHROW(b.validate(8));
    b.labels[0] = 2;
    CHECK_THROWS_AS(b.validate(8), std::invalid_argument);
    b.labels[0] = 1;
    b.group_ids.clear();
    CHECK_THROWS_AS(b.validate(8), std::invalid_argument);

    TokenBatch r = ranking_batch(rng, 8);
    r.labels[0] = 4;
    CHECK_THROWS_AS(r.validate(8), std::invalid_argument);
    r.labels[0] = 0;
    r.group_ids = std::vector<int>(r.batch, 0);
    CHECK_THROWS_AS(r.validate(8), std::invalid_argument);
}

TEST_CASE("params validation and init") {
    Rng rng(1);
    ModelParams p = testing::tiny_model(rng);
    CHECK_NOTHROW(p.validate());
    CHECK(p.tensors().size() == p.tensor_names().size());
    CHECK(p.parameter_count() == 9 * 3 + 3 * 5 + 5 + 5 + 5 * 2 + 2);
    p.dropout_rate = 1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.dropout_rate = 0.1;
    p.head_rank = Tensor({4, 1});
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);

    Rng a(5), b(5);
    CHECK(bitwise_equal(testing::tiny_model(a), testing::tiny_model(b)));
}

TEST_CASE("checkpoint round trip is bitwise") {
    Rng rng(9);
    ModelParams p = testing::tiny_model(rng, 12, 4, Activation::Relu, 0.1);
    p.embedding[0] = -0.0;
    p.embedding[1] = 1.0 / 3.0;
    p.embedding[2] = 5e-324;
    const auto path = testing::scratch_dir("ckpt") / "model.json";
    save_checkpoint(p, path);
    const ModelParams q = load_checkpoint(path);
    CHECK(bitwise_equal(p, q));
    CHECK(q.encoder[0].activation == Activation::Relu);

    auto doc = checkpoint_to_json(p);
    doc["version"] = 99;
    CHECK_THROWS(checkpoint_from_json(doc));
}
