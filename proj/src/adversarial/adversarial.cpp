#include "advtrain/adversarial.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace advtrain {

NormOrder parse_norm_order(std::string_view text) {
    if (text == "inf" || text == "infinity" || text == "linf") return NormOrder::Infinity;
    throw std::invalid_argument("unsupported perturbation norm '" + std::string(text) + "' (only inf is implemented)");
}

std::string_view to_string(DeltaInit init) { return init == DeltaInit::Zero ? "zero" : "uniform"; }

DeltaInit parse_delta_init(std::string_view text) {
    if (text == "zero") return DeltaInit::Zero;
    if (text == "uniform") return DeltaInit::UniformBall;
    throw std::invalid_argument("unknown perturbation init '" + std::string(text) + "' (expected zero or uniform)");
}

void AdvConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be finite and >= 0");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("step_size must be finite and > 0");
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite and >= 0");
}

Perturbation project_linf(Perturbation delta, double epsilon) {
    if (!(epsilon >= 0.0)) throw std::invalid_argument("projection radius must be >= 0");
    for (double& v : delta.delta.data()) {
        double r = v > epsilon ? epsilon : (v < -epsilon ? -epsilon : v);
        v = r == 0.0 ? 0.0 : r;
    }
    return delta;
}

Var cross_entropy(Var logits, const TokenBatch& batch) {
    if (batch.labels.empty()) throw std::invalid_argument("cross-entropy needs a labeled batch");
    if (logits.shape() != batch.logits_shape()) {
        throw std::invalid_argument("logits " + shape_string(logits.shape()) + " do not match batch " +
                                    shape_string(batch.logits_shape()));
    }
    return ops::scale(ops::mean(ops::pick(ops::log_softmax(logits), batch.labels)), -1.0);
}

Tensor reference_log_probs(const ModelParams& params, const TokenBatch& batch) {
    return ops::log_softmax_values(forward(params, batch, ForwardOptions{}));
}

namespace {

Var perturbed_logits(const BoundParams& params, const TokenBatch& batch, Var embeddings, const Perturbation* delta,
                     const ForwardOptions& options) {
    std::optional<Var> d;
    if (delta != nullptr) d = embeddings.tape->constant(delta->delta);
    return forward_from_embeddings(params, batch, embeddings, d, options);
}

}  // namespace

Var label_loss(const BoundParams& params, const TokenBatch& batch, Var embeddings, const Perturbation* delta,
               const ForwardOptions& options) {
    return cross_entropy(perturbed_logits(params, batch, embeddings, delta, options), batch);
}

Var virtual_loss(const BoundParams& params, const TokenBatch& batch, Var embeddings, const Tensor& reference,
                 const Perturbation* delta) {
    Var logits = perturbed_logits(params, batch, embeddings, delta, ForwardOptions{});
    return ops::mean(ops::kl_to_reference(logits, reference));
}

double label_loss(const ModelParams& params, const TokenBatch& batch, const Perturbation* delta) {
    Tape tape;
    BoundParams b = bind(tape, params, false);
    return label_loss(b, batch, embed(b, batch), delta, ForwardOptions{}).value().item();
}

double virtual_loss(const ModelParams& params, const TokenBatch& batch, const Perturbation* delta) {
    const Tensor reference = reference_log_probs(params, batch);
    Tape tape;
    BoundParams b = bind(tape, params, false);
    return virtual_loss(b, batch, embed(b, batch), reference, delta).value().item();
}

Perturbation estimate_delta(const ModelParams& params, const TokenBatch& batch, const AdvConfig& config,
                            InnerObjective objective, Rng& init_rng, const Tensor* reference,
                            const IterateObserver& observer) {
    config.validate();
    if (objective == InnerObjective::LabelLoss && batch.labels.empty()) {
        throw std::invalid_argument("label-based perturbation needs a labeled batch");
    }
    const EmbeddedBatch emb = embed(params, batch);

    std::optional<Tensor> own_reference;
    if (objective == InnerObjective::VirtualLoss && reference == nullptr) {
        own_reference = reference_log_probs(params, batch);
        reference = &*own_reference;
    }

    Perturbation delta{Tensor(emb.embeddings.shape())};
    const DeltaInit init = objective == InnerObjective::LabelLoss ? config.init : config.virtual_init;
    if (init == DeltaInit::UniformBall) {
        for (double& v : delta.delta.data()) v = init_rng.uniform(-config.epsilon, config.epsilon);
        delta = project_linf(std::move(delta), config.epsilon);
    }
    if (observer) observer(0, delta);

    for (int step = 1; step <= config.steps; ++step) {
        Tape tape;
        BoundParams frozen = bind(tape, params, false);
        Var x = tape.constant(emb.embeddings);
        Var d = tape.parameter(delta.delta);
        Var logits = forward_from_embeddings(frozen, batch, x, d, ForwardOptions{});
        Var loss = objective == InnerObjective::LabelLoss ? cross_entropy(logits, batch)
                                                          : ops::mean(ops::kl_to_reference(logits, *reference));
        tape.backward(loss);
        const Tensor g = tape.grad(d);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
            delta.delta[i] += config.step_size * sign;
        }
        delta = project_linf(std::move(delta), config.epsilon);
        if (observer) observer(step, delta);
    }
    return delta;
}

std::string_view to_string(Objective objective) {
    switch (objective) {
        case Objective::Standard: return "standard";
        case Objective::Adv: return "adv";
        case Objective::Smart: return "smart";
        case Objective::Alice: return "alice";
    }
    return "unknown";
}

Objective parse_objective(std::string_view text) {
    if (text == "standard") return Objective::Standard;
    if (text == "adv") return Objective::Adv;
    if (text == "smart") return Objective::Smart;
    if (text == "alice") return Objective::Alice;
    throw std::invalid_argument("unknown objective '" + std::string(text) +
                                "' (expected standard, adv, smart or alice)");
}

ObjectiveResult outer_loss(Objective objective, const BoundParams& params, const TokenBatch& batch,
                           const FixedPerturbations& fixed, double alpha, const ForwardOptions& options) {
    const bool uses_label_delta = objective == Objective::Adv || objective == Objective::Alice;
    // a zero-weight smoothness term is dropped rather than multiplied by 0
    const bool uses_virtual = (objective == Objective::Smart || objective == Objective::Alice) && alpha != 0.0;
    if (uses_label_delta && !fixed.label_delta) throw std::invalid_argument("objective needs a label perturbation");
    if (uses_virtual && (!fixed.virtual_delta || !fixed.reference)) {
        throw std::invalid_argument("objective needs a smoothness perturbation and reference");
    }

    ObjectiveResult result;
    Var x = embed(params, batch);
    const Perturbation* d1 = uses_label_delta ? &*fixed.label_delta : nullptr;
    Var label = label_loss(params, batch, x, d1, options);
    result.label_term = label.value().item();
    result.label_delta_linf = d1 != nullptr ? d1->linf() : 0.0;
    result.loss = label;
    if (uses_virtual) {
        Var smooth = ops::scale(virtual_loss(params, batch, x, *fixed.reference, &*fixed.virtual_delta), alpha);
        result.smooth_term = smooth.value().item();
        result.virtual_delta_linf = fixed.virtual_delta->linf();
        result.loss = ops::add(label, smooth);
    }
    return result;
}

ObjectiveResult compute_objective(Objective objective, const BoundParams& trainable, const ModelParams& values,
                                  const TokenBatch& batch, const AdvConfig& config, const ForwardOptions& options,
                                  Rng& init_rng) {
    FixedPerturbations fixed;
    if (objective == Objective::Adv || objective == Objective::Alice) {
        config.validate();
        fixed.label_delta = estimate_delta(values, batch, config, InnerObjective::LabelLoss, init_rng);
    }
    if ((objective == Objective::Smart || objective == Objective::Alice) && config.alpha != 0.0) {
        config.validate();
        fixed.reference = reference_log_probs(values, batch);
        fixed.virtual_delta =
            estimate_delta(values, batch, config, InnerObjective::VirtualLoss, init_rng, &*fixed.reference);
    }
    return outer_loss(objective, trainable, batch, fixed, config.alpha, options);
}

ObjectiveResult standard_objective(const BoundParams& trainable, const TokenBatch& batch, const ForwardOptions& options) {
    return outer_loss(Objective::Standard, trainable, batch, FixedPerturbations{}, 0.0, options);
}

ObjectiveResult adv_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                              const AdvConfig& config, const ForwardOptions& options, Rng& init_rng) {
    return compute_objective(Objective::Adv, trainable, values, batch, config, options, init_rng);
}

ObjectiveResult smart_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                                const AdvConfig& config, const ForwardOptions& options, Rng& init_rng) {
    return compute_objective(Objective::Smart, trainable, values, batch, config, options, init_rng);
}

ObjectiveResult alice_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                                const AdvConfig& config, const ForwardOptions& options, Rng& init_rng) {
    return compute_objective(Objective::Alice, trainable, values, batch, config, options, init_rng);
}

}  // namespace advtrain
