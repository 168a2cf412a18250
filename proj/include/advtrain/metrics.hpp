#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "json.hpp"

#include "advtrain/adversarial.hpp"
#include "advtrain/data.hpp"
#include "advtrain/model.hpp"

namespace advtrain {

struct EvalReport {
    double accuracy = 0.0;
    std::optional<double> em;  // pairwise only
    std::optional<double> f1;  // pairwise only
    std::optional<double> robust_accuracy;
    std::size_t n_examples = 0;  // question groups
    std::optional<AdvConfig> attack_config;
};

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const AdvConfig& config);
AdvConfig adv_config_from_json(const nlohmann::json& doc);

/// Fraction of positions where preds == labels.
double accuracy(std::span<const int> preds, std::span<const int> labels);

/// Fraction of question groups whose every candidate is labeled correctly.
double exact_match(std::span<const int> preds, std::span<const int> labels, std::span<const int> group_ids);

/// Per group, F1 between the candidates predicted plausible and those labeled
/// plausible, averaged over groups. A group with both sets empty scores 1; with
/// exactly one empty it scores 0.
double f1_overlap(std::span<const int> preds, std::span<const int> labels, std::span<const int> group_ids);

/// Evaluation attack derived from a training config: same radius, five steps
/// of size radius / 4, zero start.
AdvConfig default_attack(double epsilon);

/// Accuracy under a label-loss attack started at delta = 0, with dropout off.
/// Every iterate of the ascent (including the start) is a candidate; an
/// example counts only if it is classified correctly under all of them.
double robust_accuracy(const ModelParams& params, const Dataset& dataset, const AdvConfig& attack,
                       std::size_t batch_size = 64);

EvalReport evaluate(const ModelParams& params, const Dataset& dataset, const std::optional<AdvConfig>& attack,
                    std::size_t batch_size = 64);

}  // namespace advtrain
