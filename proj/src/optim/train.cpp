#include "advtrain/train.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>

#include "advtrain/metrics.hpp"

namespace advtrain {

using nlohmann::json;

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid train config: " + what); };
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (max_epochs == 0) fail("max_epochs must be positive");
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) fail("warmup_ratio must be in [0, 1]");
    if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
    adv.validate();
}

json to_json(const TrainConfig& c) {
    return json{{"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs},
                {"warmup_ratio", c.warmup_ratio},
                {"clip_norm", c.clip_norm},
                {"dropout_rate", c.dropout_rate},
                {"seed", c.seed},
                {"objective", std::string(to_string(c.objective))},
                {"adv", to_json(c.adv)},
                {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

TrainConfig train_config_from_json(const json& doc) {
    TrainConfig c;
    c.learning_rate = doc.at("learning_rate").get<double>();
    c.batch_size = doc.at("batch_size").get<std::size_t>();
    c.max_epochs = doc.at("max_epochs").get<std::size_t>();
    c.warmup_ratio = doc.at("warmup_ratio").get<double>();
    c.clip_norm = doc.at("clip_norm").get<double>();
    c.dropout_rate = doc.at("dropout_rate").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.objective = parse_objective(doc.at("objective").get<std::string>());
    c.adv = adv_config_from_json(doc.at("adv"));
    if (doc.contains("adam")) {
        const json& a = doc.at("adam");
        c.adam = AdamOptions{a.at("beta1").get<double>(), a.at("beta2").get<double>(), a.at("epsilon").get<double>()};
    }
    c.validate();
    return c;
}

json to_json(const EpochLog& log) {
    return json{{"epoch", log.epoch},           {"train_loss", log.train_loss},     {"adv_term", log.adv_term},
                {"smooth_term", log.smooth_term}, {"dev_accuracy", log.dev_accuracy}, {"lr", log.lr}};
}

TrainingDiverged::TrainingDiverged(std::size_t epoch_, std::size_t batch_index_, std::size_t step_, double loss)
    : std::runtime_error("training diverged: loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch_) +
                         ", batch " + std::to_string(batch_index_) + ", step " + std::to_string(step_)),
      epoch(epoch_),
      batch_index(batch_index_),
      step(step_) {}

TrainResult train(ModelParams params, const Dataset& train_set, const Dataset& dev_set, const TrainConfig& config,
                  std::ostream* jsonl) {
    config.validate();
    if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
    if (dev_set.size() == 0) throw std::invalid_argument("dev set is empty");
    params.dropout_rate = config.dropout_rate;
    params.validate();

    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng dropout_rng(derive_seed(config.seed, "dropout"));
    Rng init_rng(derive_seed(config.seed, "perturbation"));

    const std::size_t batches_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = batches_per_epoch * config.max_epochs;
    AdamState adam = AdamState::for_params(std::as_const(params).tensors());

    TrainResult result;
    double best_dev = -1.0;
    std::size_t step = 0;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0, label_sum = 0.0, smooth_sum = 0.0, lr = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t start = b * config.batch_size;
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const TokenBatch batch = make_batch(train_set, std::span<const std::size_t>(order).subspan(start, len));

            Tape tape;
            BoundParams bound = bind(tape, params, true);
            ForwardOptions options{true, &dropout_rng};
            ObjectiveResult obj =
                compute_objective(config.objective, bound, params, batch, config.adv, options, init_rng);
            const double loss = obj.loss.value().item();
            if (!std::isfinite(loss)) throw TrainingDiverged(epoch, b, step, loss);
            tape.backward(obj.loss);

            std::vector<Tensor> grads = gradients(tape, bound);
            clip_gradients(grads, config.clip_norm);
            lr = lr_at(step, total_steps, config.learning_rate, config.warmup_ratio);
            adam_step(params.tensors(), grads, adam, lr, config.adam);
            ++step;

            loss_sum += loss;
            label_sum += obj.label_term;
            smooth_sum += obj.smooth_term;
        }

        EpochLog entry;
        entry.epoch = epoch;
        const double n = static_cast<double>(batches_per_epoch);
        entry.train_loss = loss_sum / n;
        entry.adv_term = label_sum / n;
        entry.smooth_term = smooth_sum / n;
        entry.dev_accuracy = evaluate(params, dev_set, std::nullopt).accuracy;
        entry.lr = lr;
        result.log.push_back(entry);
        if (jsonl != nullptr) *jsonl << to_json(entry).dump() << '\n';

        if (entry.dev_accuracy > best_dev) {
            best_dev = entry.dev_accuracy;
            result.best_epoch = epoch;
            result.params = params;
        }
    }
    result.final_params = std::move(params);
    return result;
}

}  // namespace advtrain
