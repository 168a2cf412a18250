#include "advtrain/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

namespace advtrain {

using nlohmann::json;

json to_json(const AdvConfig& config) {
    return json{{"epsilon", config.epsilon},
                {"step_size", config.step_size},
                {"steps", config.steps},
                {"norm", "inf"},
                {"alpha", config.alpha},
                {"init", std::string(to_string(config.init))},
                {"virtual_init", std::string(to_string(config.virtual_init))}};
}

AdvConfig adv_config_from_json(const json& doc) {
    AdvConfig c;
    c.epsilon = doc.at("epsilon").get<double>();
    c.step_size = doc.at("step_size").get<double>();
    c.steps = doc.at("steps").get<int>();
    c.norm_order = parse_norm_order(doc.value("norm", std::string("inf")));
    c.alpha = doc.value("alpha", 1.0);
    c.init = parse_delta_init(doc.value("init", std::string("zero")));
    c.virtual_init = parse_delta_init(doc.value("virtual_init", std::string("uniform")));
    c.validate();
    return c;
}

json to_json(const EvalReport& report) {
    json j{{"accuracy", report.accuracy}, {"n_examples", report.n_examples}};
    j["em"] = report.em ? json(*report.em) : json(nullptr);
    j["f1"] = report.f1 ? json(*report.f1) : json(nullptr);
    j["robust_accuracy"] = report.robust_accuracy ? json(*report.robust_accuracy) : json(nullptr);
    j["attack_config"] = report.attack_config ? to_json(*report.attack_config) : json(nullptr);
    return j;
}

namespace {

void check_aligned(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument("metric inputs differ in length: " + std::to_string(preds.size()) + " predictions, " +
                                    std::to_string(labels.size()) + " labels");
    }
}

struct GroupCounts {
    std::size_t wrong = 0;
    std::size_t predicted = 0;
    std::size_t actual = 0;
    std::size_t overlap = 0;
};

std::map<int, GroupCounts> group_counts(std::span<const int> preds, std::span<const int> labels,
                                        std::span<const int> group_ids) {
    check_aligned(preds, labels);
    if (group_ids.size() != preds.size()) throw std::invalid_argument("group ids must align with predictions");
    if (preds.empty()) throw std::invalid_argument("grouped metrics need at least one group");
    std::map<int, GroupCounts> groups;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        GroupCounts& g = groups[group_ids[i]];
        g.wrong += preds[i] != labels[i];
        g.predicted += preds[i] == 1;
        g.actual += labels[i] == 1;
        g.overlap += preds[i] == 1 && labels[i] == 1;
    }
    return groups;
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> labels) {
    check_aligned(preds, labels);
    if (preds.empty()) throw std::invalid_argument("accuracy of zero predictions");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double exact_match(std::span<const int> preds, std::span<const int> labels, std::span<const int> group_ids) {
    const auto groups = group_counts(preds, labels, group_ids);
    std::size_t perfect = 0;
    for (const auto& [id, g] : groups) perfect += g.wrong == 0;
    return static_cast<double>(perfect) / static_cast<double>(groups.size());
}

double f1_overlap(std::span<const int> preds, std::span<const int> labels, std::span<const int> group_ids) {
    const auto groups = group_counts(preds, labels, group_ids);
    double total = 0.0;
    for (const auto& [id, g] : groups) {
        if (g.predicted == 0 && g.actual == 0) {
            total += 1.0;
        } else if (g.predicted != 0 && g.actual != 0 && g.overlap != 0) {
            const double precision = static_cast<double>(g.overlap) / static_cast<double>(g.predicted);
            const double recall = static_cast<double>(g.overlap) / static_cast<double>(g.actual);
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    return total / static_cast<double>(groups.size());
}

AdvConfig default_attack(double epsilon) {
    AdvConfig a;
    a.epsilon = epsilon;
    a.step_size = epsilon > 0.0 ? epsilon / 4.0 : 1.0;
    a.steps = 5;
    a.init = DeltaInit::Zero;
    return a;
}

namespace {

template <typename Fn>
void for_each_batch(const Dataset& dataset, std::size_t batch_size, Fn&& fn) {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, idx.size() - start);
        fn(make_batch(dataset, std::span<const std::size_t>(idx).subspan(start, len)));
    }
}

}  // namespace

double robust_accuracy(const ModelParams& params, const Dataset& dataset, const AdvConfig& attack,
                       std::size_t batch_size) {
    attack.validate();
    if (dataset.size() == 0) throw std::invalid_argument("robust accuracy of an empty dataset");
    AdvConfig cfg = attack;
    cfg.init = DeltaInit::Zero;
    Rng unused(0);
    std::size_t hits = 0, total = 0;
    for_each_batch(dataset, batch_size, [&](const TokenBatch& batch) {
        const EmbeddedBatch emb = embed(params, batch);
        std::vector<std::uint8_t> survived(batch.labels.size(), 1);
        auto check = [&](int, const Perturbation& delta) {
            const auto preds = predict(forward_from_embeddings(params, emb, &delta.delta), batch.task);
            for (std::size_t i = 0; i < preds.size(); ++i)
                if (preds[i] != batch.labels[i]) survived[i] = 0;
        };
        estimate_delta(params, batch, cfg, InnerObjective::LabelLoss, unused, nullptr, check);
        for (auto s : survived) hits += s;
        total += survived.size();
    });
    return static_cast<double>(hits) / static_cast<double>(total);
}

EvalReport evaluate(const ModelParams& params, const Dataset& dataset, const std::optional<AdvConfig>& attack,
                    std::size_t batch_size) {
    if (dataset.size() == 0) throw std::invalid_argument("cannot evaluate an empty dataset");
    std::vector<int> preds, labels, groups;
    for_each_batch(dataset, batch_size, [&](const TokenBatch& batch) {
        const auto p = predict(forward(params, batch), batch.task);
        preds.insert(preds.end(), p.begin(), p.end());
        labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
        groups.insert(groups.end(), batch.group_ids.begin(), batch.group_ids.end());
    });
    EvalReport report;
    report.n_examples = dataset.size();
    report.accuracy = accuracy(preds, labels);
    if (dataset.spec.task == TaskKind::PairwiseClassification) {
        report.em = exact_match(preds, labels, groups);
        report.f1 = f1_overlap(preds, labels, groups);
    }
    if (attack) {
        report.robust_accuracy = robust_accuracy(params, dataset, *attack, batch_size);
        report.attack_config = *attack;
        report.attack_config->init = DeltaInit::Zero;
    }
    return report;
}

}  // namespace advtrain
