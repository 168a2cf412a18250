#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "advtrain/metrics.hpp"
#include "support.hpp"

using namespace advtrain;

using V = std::vector<int>;

TEST_CASE("accuracy fixtures") {
    CHECK(accuracy(V{1, 2, 3}, V{1, 2, 3}) == 1.0);
    CHECK(accuracy(V{0, 0}, V{1, 1}) == 0.0);
    CHECK(accuracy(V{1, 1, 0, 1}, V{1, 1, 0, 0}) == 0.75);
    CHECK_THROWS_AS(accuracy(V{1}, V{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(accuracy(V{}, V{}), std::invalid_argument);
}

TEST_CASE("exact match fixtures") {
    CHECK(exact_match(V{1, 0, 1}, V{1, 0, 1}, V{4, 4, 4}) == 1.0);
    CHECK(exact_match(V{1, 0, 0}, V{1, 0, 1}, V{4, 4, 4}) == 0.0);
    CHECK(exact_match(V{1, 0, 1, 1}, V{1, 0, 1, 0}, V{0, 0, 1, 1}) == 0.5);
    CHECK_THROWS_AS(exact_match(V{}, V{}, V{}), std::invalid_argument);
    CHECK_THROWS_AS(exact_match(V{1}, V{1}, V{}), std::invalid_argument);
}

TEST_CASE("F1 fixtures") {
    CHECK(f1_overlap(V{1, 1, 0}, V{1, 1, 0}, V{0, 0, 0}) == 1.0);
    CHECK(f1_overlap(V{1, 0}, V{1, 1}, V{0, 0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(f1_overlap(V{1, 0}, V{0, 1}, V{0, 0}) == 0.0);
    CHECK(f1_overlap(V{0, 0}, V{0, 0}, V{0, 0}) == 1.0);
    CHECK(f1_overlap(V{1, 0}, V{0, 0}, V{0, 0}) == 0.0);
    CHECK(f1_overlap(V{0, 0}, V{1, 0}, V{0, 0}) == 0.0);
    // macro average: groups score 1 and 2/3
    CHECK(f1_overlap(V{1, 1, 0}, V{1, 1, 1}, V{0, 1, 1}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("metrics are invariant to example order and EM <= accuracy") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(30);
        V preds(n), labels(n), groups(n);
        for (std::size_t i = 0; i < n; ++i) {
            preds[i] = static_cast<int>(rng.below(2));
            labels[i] = static_cast<int>(rng.below(2));
            groups[i] = static_cast<int>(rng.below(6));
        }
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = i;
        rng.shuffle(perm);
        V p2(n), l2(n), g2(n);
        for (std::size_t i = 0; i < n; ++i) p2[i] = preds[perm[i]], l2[i] = labels[perm[i]], g2[i] = groups[perm[i]];
        CHECK(accuracy(preds, labels) == accuracy(p2, l2));
        CHECK(exact_match(preds, labels, groups) == exact_match(p2, l2, g2));
        CHECK(f1_overlap(preds, labels, groups) == f1_overlap(p2, l2, g2));
        // per-question accuracy bound: a perfect group has every candidate right
        CHECK(exact_match(preds, labels, groups) <= 1.0);
        if (accuracy(preds, labels) < 1.0) CHECK(exact_match(preds, labels, groups) < 1.0);
    }
}

TEST_CASE("default attack derives from the training radius") {
    const AdvConfig a = default_attack(0.08);
    CHECK(a.epsilon == 0.08);
    CHECK(a.step_size == 0.02);
    CHECK(a.steps == 5);
    CHECK(a.init == DeltaInit::Zero);
    CHECK(adv_config_from_json(to_json(a)).step_size == a.step_size);
}

namespace {

struct Fixture {
    Dataset data;
    ModelParams params;
};

Fixture fixture(TaskKind task, std::uint64_t seed) {
    Fixture f;
    f.data = generate(testing::small_spec(task, 40, seed));
    Rng rng(seed);
    ModelConfig mc;
    mc.vocab_size = f.data.spec.vocab_size;
    mc.embedding_dim = 4;
    mc.hidden = {6};
    f.params = init_params(mc, rng);
    return f;
}

}  // namespace

TEST_CASE("robust accuracy: eps 0 equals clean accuracy; never above clean") {
    for (TaskKind task : {TaskKind::RelevanceRanking, TaskKind::PairwiseClassification}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Fixture f = fixture(task, seed);
            const EvalReport clean = evaluate(f.params, f.data, std::nullopt, 7);
            AdvConfig zero = default_attack(0.0);
            CHECK(robust_accuracy(f.params, f.data, zero) == clean.accuracy);
            if (task == TaskKind::PairwiseClassification) {
                CHECK(*clean.em <= clean.accuracy);
            }
            for (double eps : {0.01, 0.1, 0.5}) CHECK(robust_accuracy(f.params, f.data, default_attack(eps)) <= clean.accuracy);
        }
    }
}

TEST_CASE("robust accuracy matches a grid attack on a one-dimensional model") {
    // d_emb = 1, no encoder, pairwise head: the logit gap is linear in the
    // pooled input, so the worst case over the ball is at an endpoint.
    Rng rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        ModelParams p;
        p.embedding = Tensor({3, 1}, {0.0, rng.uniform(-1, 1), rng.uniform(-1, 1)});
        p.head_rank = Tensor({1, 1}, {1.0});
        p.head_pair_weight = Tensor({1, 2}, {rng.uniform(-2, 2), rng.uniform(-2, 2)});
        p.head_pair_bias = Tensor::vector({rng.uniform(-0.3, 0.3), 0.0});
        p.dropout_rate = 0.0;

        Dataset ds;
        ds.spec.task = TaskKind::PairwiseClassification;
        ds.spec.vocab_size = 3;
        ds.spec.seq_len = 1;
        ds.spec.key_token_count = 1;
        for (int i = 0; i < 6; ++i)
            ds.examples.push_back(ExampleGroup{i, {{1 + (i % 2)}}, {static_cast<int>(rng.below(2))}});
        ds.spec.num_examples = ds.examples.size();
        const double eps = rng.uniform(0.0, 0.6);

        std::size_t robust = 0;
        for (const auto& ex : ds.examples) {
            const double x = p.embedding[ex.sequences[0][0]];
            bool ok = true;
            for (int k = 0; k <= 200; ++k) {
                const double xd = x - eps + 2 * eps * k / 200.0;
                const double z0 = xd * p.head_pair_weight[0] + p.head_pair_bias[0];
                const double z1 = xd * p.head_pair_weight[1] + p.head_pair_bias[1];
                if ((z1 > z0 ? 1 : 0) != ex.labels[0]) ok = false;
            }
            robust += ok;
        }
        AdvConfig attack = default_attack(eps);
        attack.steps = 1;
        attack.step_size = eps > 0 ? eps : 1.0;
        CHECK(robust_accuracy(p, ds, attack) == static_cast<double>(robust) / 6.0);
    }
}

TEST_CASE("evaluate: report shape per task, serialization") {
    const Fixture rank = fixture(TaskKind::RelevanceRanking, 2);
    const EvalReport r = evaluate(rank.params, rank.data, default_attack(0.05));
    CHECK_FALSE(r.em);
    CHECK_FALSE(r.f1);
    CHECK(r.robust_accuracy);
    CHECK(r.n_examples == 40);
    const auto j = to_json(r);
    CHECK(j.at("em").is_null());
    CHECK(j.at("attack_config").at("steps") == 5);

    const Fixture pair = fixture(TaskKind::PairwiseClassification, 2);
    const EvalReport q = evaluate(pair.params, pair.data, std::nullopt);
    CHECK(q.em);
    CHECK(q.f1);
    CHECK_FALSE(q.robust_accuracy);
    for (double v : {q.accuracy, *q.em, *q.f1}) CHECK((v >= 0.0 && v <= 1.0));

    // batch size does not change the numbers
    const EvalReport q1 = evaluate(pair.params, pair.data, default_attack(0.1), 1);
    const EvalReport q64 = evaluate(pair.params, pair.data, default_attack(0.1), 64);
    CHECK(q1.accuracy == q64.accuracy);
    CHECK(*q1.robust_accuracy == *q64.robust_accuracy);
}
