#include <functional>

#include "advtrain/grad_check.hpp"
#include "advtrain/harness.hpp"
#include "advtrain/ops.hpp"

namespace advtrain {

bool GradcheckSuiteReport::passed() const {
    for (const GradcheckCase& c : cases)
        if (c.failures != 0) return false;
    return true;
}

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Values bounded away from zero so a probe never crosses a kink.
Tensor away_from_zero(Rng& rng, const Shape& shape) {
    Tensor t(shape);
    for (double& v : t.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
    return t;
}

// Contracts a tensor output against fixed random weights so every output
// coordinate gets a distinct adjoint.
Var contract(Var y, const Tensor& weights) {
    Var w = y.tape->constant(weights);
    return ops::sum(ops::mul(y, w));
}

struct Draw {
    std::vector<Tensor> points;
    MultiScalarFn fn;
};

using CaseFn = std::function<Draw(Rng&)>;

struct Case {
    std::string name;
    CaseFn draw;
};

// Shared fixture for the model-level cases.
struct TinyProblem {
    ModelParams params;
    TokenBatch batch;
    FixedPerturbations fixed;
    std::uint64_t dropout_seed = 0;
};

TokenBatch random_batch(Rng& rng, TaskKind task, std::size_t vocab) {
    TokenBatch b;
    b.task = task;
    b.batch = 2;
    b.options = task == TaskKind::RelevanceRanking ? 3 : 1;
    b.seq_len = 4;
    const std::size_t rows = b.sequences();
    b.tokens.assign(rows * b.seq_len, kPadToken);
    b.pad_mask.assign(rows * b.seq_len, 0);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t live = 1 + rng.below(b.seq_len);
        for (std::size_t t = 0; t < live; ++t) {
            b.tokens[r * b.seq_len + t] = static_cast<int>(1 + rng.below(vocab - 1));
            b.pad_mask[r * b.seq_len + t] = 1;
        }
    }
    for (std::size_t i = 0; i < b.batch; ++i) {
        if (task == TaskKind::RelevanceRanking) {
            b.labels.push_back(static_cast<int>(rng.below(b.options)));
        } else {
            b.labels.push_back(static_cast<int>(rng.below(2)));
            b.group_ids.push_back(0);
        }
    }
    return b;
}

TinyProblem tiny_problem(Rng& rng) {
    TinyProblem p;
    ModelConfig mc;
    mc.vocab_size = 7;
    mc.embedding_dim = 3;
    mc.hidden = {4};
    mc.activation = Activation::Tanh;
    mc.dropout_rate = 0.2;
    mc.embedding_init_scale = 0.8;
    p.params = init_params(mc, rng);
    for (double& v : p.params.head_pair_bias.data()) v = rng.uniform(-0.5, 0.5);
    for (double& v : p.params.encoder[0].bias.data()) v = rng.uniform(-0.5, 0.5);
    const TaskKind task = rng.bernoulli(0.5) ? TaskKind::RelevanceRanking : TaskKind::PairwiseClassification;
    p.batch = random_batch(rng, task, mc.vocab_size);

    const Shape emb_shape = p.batch.embedding_shape(mc.embedding_dim);
    const double eps = 0.1;
    p.fixed.label_delta = Perturbation{random_tensor(rng, emb_shape, -eps, eps)};
    p.fixed.virtual_delta = Perturbation{random_tensor(rng, emb_shape, -eps, eps)};
    Tensor other_logits = random_tensor(rng, p.batch.logits_shape(), -1.5, 1.5);
    p.fixed.reference = ops::log_softmax_values(other_logits);
    p.dropout_seed = rng.next_u64();
    return p;
}

BoundParams bind_points(const ModelParams& params, std::span<const Var> vars) {
    BoundParams b;
    std::size_t i = 0;
    b.embedding = vars[i++];
    for (const DenseLayer& layer : params.encoder) {
        Var w = vars[i++];
        Var bias = vars[i++];
        b.encoder.emplace_back(w, bias);
        b.activations.push_back(layer.activation);
    }
    b.head_rank = vars[i++];
    b.head_pair_weight = vars[i++];
    b.head_pair_bias = vars[i++];
    b.dropout_rate = params.dropout_rate;
    return b;
}

std::vector<Tensor> param_points(const ModelParams& params) {
    std::vector<Tensor> points;
    for (const Tensor* t : params.tensors()) points.push_back(*t);
    return points;
}

Case objective_case(Objective objective) {
    return {"objective " + std::string(to_string(objective)), [objective](Rng& rng) {
                auto p = std::make_shared<TinyProblem>(tiny_problem(rng));
                Draw d;
                d.points = param_points(p->params);
                d.fn = [p, objective](Tape&, std::span<const Var> vars) {
                    BoundParams b = bind_points(p->params, vars);
                    Rng dropout(p->dropout_seed);
                    return outer_loss(objective, b, p->batch, p->fixed, 0.7, ForwardOptions{true, &dropout}).loss;
                };
                return d;
            }};
}

Case inner_case(InnerObjective objective) {
    const char* name = objective == InnerObjective::LabelLoss ? "label_loss wrt input" : "virtual_loss wrt input";
    return {name, [objective](Rng& rng) {
                auto p = std::make_shared<TinyProblem>(tiny_problem(rng));
                Draw d;
                d.points = {embed(p->params, p->batch).embeddings};
                d.fn = [p, objective](Tape& tape, std::span<const Var> vars) {
                    BoundParams b = bind(tape, p->params, false);
                    if (objective == InnerObjective::LabelLoss)
                        return label_loss(b, p->batch, vars[0], &*p->fixed.label_delta, ForwardOptions{});
                    return virtual_loss(b, p->batch, vars[0], *p->fixed.reference, &*p->fixed.virtual_delta);
                };
                return d;
            }};
}

std::vector<Case> suite_cases() {
    std::vector<Case> cases;
    auto unary = [&](std::string name, std::function<Var(Var)> op, std::function<Tensor(Rng&, const Shape&)> gen) {
        cases.push_back({name, [op, gen](Rng& rng) {
                             const Shape shape{2 + rng.below(3), 1 + rng.below(4)};
                             Draw d;
                             d.points = {gen(rng, shape)};
                             auto w = random_tensor(rng, shape);
                             d.fn = [op, w](Tape&, std::span<const Var> v) { return contract(op(v[0]), w); };
                             return d;
                         }});
    };
    auto plain = [](Rng& rng, const Shape& s) { return random_tensor(rng, s); };
    auto binary = [&](std::string name, std::function<Var(Var, Var)> op) {
        cases.push_back({name, [op](Rng& rng) {
                             const Shape shape{1 + rng.below(4), 1 + rng.below(4)};
                             Draw d;
                             d.points = {random_tensor(rng, shape), random_tensor(rng, shape)};
                             auto w = random_tensor(rng, shape);
                             d.fn = [op, w](Tape&, std::span<const Var> v) { return contract(op(v[0], v[1]), w); };
                             return d;
                         }});
    };

    binary("add", ops::add);
    binary("sub", ops::sub);
    binary("mul", ops::mul);
    unary("scale", [](Var a) { return ops::scale(a, -1.7); }, plain);
    unary("relu", ops::relu, away_from_zero);
    unary("tanh", ops::tanh, plain);
    unary("exp", ops::exp, plain);
    unary("log", ops::log, [](Rng& rng, const Shape& s) { return random_tensor(rng, s, 0.2, 2.0); });
    unary("softmax", ops::softmax, plain);
    unary("log_softmax", ops::log_softmax, plain);
    unary("reshape", [](Var a) { return ops::reshape(ops::reshape(a, {a.value().size()}), a.shape()); }, plain);

    cases.push_back({"sum", [](Rng& rng) {
                         return Draw{{random_tensor(rng, {3, 2})}, [](Tape&, std::span<const Var> v) {
                                         return ops::sum(ops::tanh(v[0]));
                                     }};
                     }});
    cases.push_back({"mean", [](Rng& rng) {
                         return Draw{{random_tensor(rng, {2, 3})}, [](Tape&, std::span<const Var> v) {
                                         return ops::mean(ops::exp(v[0]));
                                     }};
                     }});
    cases.push_back({"add_bias", [](Rng& rng) {
                         const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(4);
                         auto w = random_tensor(rng, {r, c});
                         return Draw{{random_tensor(rng, {r, c}), random_tensor(rng, {c})},
                                     [w](Tape&, std::span<const Var> v) { return contract(ops::add_bias(v[0], v[1]), w); }};
                     }});
    cases.push_back({"matmul", [](Rng& rng) {
                         const std::size_t m = 1 + rng.below(3), k = 1 + rng.below(4), n = 1 + rng.below(3);
                         auto w = random_tensor(rng, {m, n});
                         return Draw{{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})},
                                     [w](Tape&, std::span<const Var> v) { return contract(ops::matmul(v[0], v[1]), w); }};
                     }});
    cases.push_back({"gather_rows", [](Rng& rng) {
                         const std::size_t vocab = 5, dim = 3;
                         std::vector<int> ids(6);
                         for (int& id : ids) id = static_cast<int>(rng.below(vocab));
                         auto w = random_tensor(rng, {2, 3, dim});
                         return Draw{{random_tensor(rng, {vocab, dim})}, [ids, w](Tape&, std::span<const Var> v) {
                                         return contract(ops::gather_rows(v[0], ids, {2, 3}), w);
                                     }};
                     }});
    cases.push_back({"apply_mask", [](Rng& rng) {
                         Tensor mask({3, 4});
                         for (double& m : mask.data()) m = static_cast<double>(rng.below(3));
                         auto w = random_tensor(rng, {3, 4});
                         return Draw{{random_tensor(rng, {3, 4})}, [mask, w](Tape&, std::span<const Var> v) {
                                         return contract(ops::apply_mask(v[0], mask), w);
                                     }};
                     }});
    cases.push_back({"dropout", [](Rng& rng) {
                         const std::uint64_t seed = rng.next_u64();
                         auto w = random_tensor(rng, {4, 3});
                         return Draw{{random_tensor(rng, {4, 3})}, [seed, w](Tape&, std::span<const Var> v) {
                                         Rng mask_rng(seed);
                                         return contract(ops::dropout(v[0], 0.3, mask_rng), w);
                                     }};
                     }});
    cases.push_back({"masked_mean_pool", [](Rng& rng) {
                         const std::size_t s = 3, t = 4, dim = 2;
                         Tensor mask({s, t});
                         for (std::size_t r = 0; r + 1 < s; ++r) {
                             mask[r * t] = 1.0;  // at least one live position
                             for (std::size_t j = 1; j < t; ++j) mask[r * t + j] = static_cast<double>(rng.below(2));
                         }
                         auto w = random_tensor(rng, {s, dim});
                         return Draw{{random_tensor(rng, {s, t, dim})}, [mask, w](Tape&, std::span<const Var> v) {
                                         return contract(ops::masked_mean_pool(v[0], mask), w);
                                     }};
                     }});
    cases.push_back({"pick", [](Rng& rng) {
                         std::vector<int> index(3);
                         for (int& i : index) i = static_cast<int>(rng.below(4));
                         auto w = random_tensor(rng, {3});
                         return Draw{{random_tensor(rng, {3, 4})}, [index, w](Tape&, std::span<const Var> v) {
                                         return contract(ops::pick(ops::log_softmax(v[0]), index), w);
                                     }};
                     }});
    cases.push_back({"kl_to_reference", [](Rng& rng) {
                         Tensor reference = ops::log_softmax_values(random_tensor(rng, {3, 4}, -2.0, 2.0));
                         auto w = random_tensor(rng, {3});
                         return Draw{{random_tensor(rng, {3, 4}, -2.0, 2.0)},
                                     [reference, w](Tape&, std::span<const Var> v) {
                                         return contract(ops::kl_to_reference(v[0], reference), w);
                                     }};
                     }});

    cases.push_back(inner_case(InnerObjective::LabelLoss));
    cases.push_back(inner_case(InnerObjective::VirtualLoss));
    cases.push_back(objective_case(Objective::Adv));
    cases.push_back(objective_case(Objective::Smart));
    cases.push_back(objective_case(Objective::Alice));
    return cases;
}

}  // namespace

GradcheckSuiteReport run_gradcheck_suite(std::uint64_t seed, std::size_t trials, double h, double tol) {
    GradcheckSuiteReport report;
    report.tolerance = tol;
    for (const Case& c : suite_cases()) {
        Rng rng(derive_seed(seed, c.name));
        GradcheckCase result{c.name, trials, 0, 0.0};
        for (std::size_t t = 0; t < trials; ++t) {
            Draw d = c.draw(rng);
            const GradCheckReport r = grad_check(d.fn, d.points, h, tol);
            result.failures += r.passed ? 0 : 1;
            result.max_error = std::max(result.max_error, r.max_error);
        }
        report.cases.push_back(result);
    }
    return report;
}

}  // namespace advtrain
