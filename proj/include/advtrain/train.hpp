#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "json.hpp"

#include "advtrain/adversarial.hpp"
#include "advtrain/data.hpp"
#include "advtrain/model.hpp"
#include "advtrain/optim.hpp"

namespace advtrain {

/// Training recipe. Defaults follow the published fine-tuning recipe (Adam,
/// 10 epochs, 10% warmup then linear decay, clip at 1, dropout 0.1). The
/// default learning rate comes from that recipe's {1e-5, 2e-5, 3e-5, 5e-5}
/// grid, which is tuned for pretrained encoders; models trained from scratch
/// need a larger rate.
struct TrainConfig {
    double learning_rate = 5e-5;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 10;
    double warmup_ratio = 0.1;
    double clip_norm = 1.0;
    double dropout_rate = 0.1;
    std::uint64_t seed = 1;
    Objective objective = Objective::Standard;
    AdvConfig adv;
    AdamOptions adam;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double adv_term = 0.0;
    double smooth_term = 0.0;
    double dev_accuracy = 0.0;
    double lr = 0.0;  // rate used by the epoch's last update
};

nlohmann::json to_json(const EpochLog& log);

struct TrainResult {
    ModelParams params;  // parameters after the best dev-accuracy epoch
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    ModelParams final_params;  // parameters after the last epoch
};

/// Raised when a batch loss is not finite.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch_index, std::size_t step, double loss);

    std::size_t epoch;
    std::size_t batch_index;
    std::size_t step;
};

/// Minibatch training of the configured objective. Each epoch reshuffles
/// with the run seed, keeps the last partial batch, and logs one record; when
/// `jsonl` is given each record is also written there as a JSON line.
TrainResult train(ModelParams params, const Dataset& train_set, const Dataset& dev_set, const TrainConfig& config,
                  std::ostream* jsonl = nullptr);

}  // namespace advtrain
