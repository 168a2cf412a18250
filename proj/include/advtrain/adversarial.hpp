#pragma once

#include <functional>
#include <optional>
#include <string_view>

#include "advtrain/model.hpp"
#include "advtrain/rng.hpp"
#include "advtrain/tape.hpp"
#include "advtrain/tensor.hpp"

namespace advtrain {

/// Only the l-infinity ball is implemented.
enum class NormOrder { Infinity };
NormOrder parse_norm_order(std::string_view text);

enum class DeltaInit { Zero, UniformBall };
std::string_view to_string(DeltaInit init);
DeltaInit parse_delta_init(std::string_view text);

/// Hyperparameters of the inner maximization and of the combined objective.
struct AdvConfig {
    double epsilon = 0.05;    // l-inf radius, embedding units
    double step_size = 0.05;  // ascent step
    int steps = 1;            // ascent iterations
    NormOrder norm_order = NormOrder::Infinity;
    double alpha = 1.0;  // weight of the smoothness term
    /// Start point for the label-based perturbation.
    DeltaInit init = DeltaInit::Zero;
    /// Start point for the smoothness perturbation. The KL objective has zero
    /// gradient at delta = 0, so a zero start never moves.
    DeltaInit virtual_init = DeltaInit::UniformBall;

    void validate() const;
};

/// Additive embedding-space offset, shaped like the embedded batch.
struct Perturbation {
    Tensor delta;

    double linf() const { return delta.max_abs(); }
};

/// Componentwise clamp to [-epsilon, epsilon]. Idempotent. Zero entries are +0.
Perturbation project_linf(Perturbation delta, double epsilon);

enum class InnerObjective { LabelLoss, VirtualLoss };

/// Mean cross-entropy against the batch labels: softmax over options for
/// ranking, two-class for pairwise.
Var cross_entropy(Var logits, const TokenBatch& batch);

/// Log-probabilities of the clean input in eval mode, used as the frozen
/// "virtual label".
Tensor reference_log_probs(const ModelParams& params, const TokenBatch& batch);

/// l(f(x + delta), y) on the tape. `delta` is treated as a constant.
Var label_loss(const BoundParams& params, const TokenBatch& batch, Var embeddings, const Perturbation* delta,
               const ForwardOptions& options);

/// Mean KL( softmax(f(x + delta)) || reference ) with f in eval mode.
Var virtual_loss(const BoundParams& params, const TokenBatch& batch, Var embeddings, const Tensor& reference,
                 const Perturbation* delta);

/// Eval-mode values of the two losses.
double label_loss(const ModelParams& params, const TokenBatch& batch, const Perturbation* delta = nullptr);
double virtual_loss(const ModelParams& params, const TokenBatch& batch, const Perturbation* delta = nullptr);

/// Called with each iterate of the ascent, starting with the initial point (step 0).
using IterateObserver = std::function<void(int step, const Perturbation& delta)>;

/// K steps of projected sign-gradient ascent on the chosen objective.
///
/// The model runs in eval mode and its parameters are only read. For
/// VirtualLoss the reference distribution is computed once (or taken from
/// `reference`) and held fixed across steps. `init_rng` is used only for a
/// UniformBall start.
Perturbation estimate_delta(const ModelParams& params, const TokenBatch& batch, const AdvConfig& config,
                            InnerObjective objective, Rng& init_rng, const Tensor* reference = nullptr,
                            const IterateObserver& observer = {});

enum class Objective { Standard, Adv, Smart, Alice };
std::string_view to_string(Objective objective);
Objective parse_objective(std::string_view text);

/// Scalar loss plus diagnostics. `label_term` is the label-based term (at
/// delta1 for ADV/ALICE, clean otherwise); `smooth_term` is alpha times the
/// KL term (0 for Standard/ADV).
struct ObjectiveResult {
    Var loss;
    double label_term = 0.0;
    double smooth_term = 0.0;
    double label_delta_linf = 0.0;
    double virtual_delta_linf = 0.0;
};

/// Perturbations and reference held fixed while the outer loss is formed.
struct FixedPerturbations {
    std::optional<Perturbation> label_delta;    // ADV, ALICE
    std::optional<Perturbation> virtual_delta;  // SMART, ALICE
    std::optional<Tensor> reference;            // SMART, ALICE
};

/// The outer loss for fixed perturbations. Gradients reach the bound
/// parameters through both forward passes, never through the perturbations
/// or the reference.
ObjectiveResult outer_loss(Objective objective, const BoundParams& params, const TokenBatch& batch,
                           const FixedPerturbations& fixed, double alpha, const ForwardOptions& options);

/// Estimates whatever perturbations the objective needs, then builds the
/// outer loss on the tape of `trainable`. Label-term dropout draws from
/// `options.dropout_rng`; perturbation starts draw from `init_rng`.
/// With alpha 0 the smoothness term and its perturbation are skipped, so no
/// start is drawn for it.
ObjectiveResult compute_objective(Objective objective, const BoundParams& trainable, const ModelParams& values,
                                  const TokenBatch& batch, const AdvConfig& config, const ForwardOptions& options,
                                  Rng& init_rng);

ObjectiveResult standard_objective(const BoundParams& trainable, const TokenBatch& batch, const ForwardOptions& options);
/// label_loss at delta1 (label-based perturbation).
ObjectiveResult adv_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                              const AdvConfig& config, const ForwardOptions& options, Rng& init_rng);
/// Clean label_loss plus alpha * virtual_loss at delta2.
ObjectiveResult smart_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                                const AdvConfig& config, const ForwardOptions& options, Rng& init_rng);
/// label_loss at delta1 plus alpha * virtual_loss at delta2, each delta
/// estimated independently.
ObjectiveResult alice_objective(const BoundParams& trainable, const ModelParams& values, const TokenBatch& batch,
                                const AdvConfig& config, const ForwardOptions& options, Rng& init_rng);

}  // namespace advtrain
