#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "advtrain/adversarial.hpp"
#include "advtrain/data.hpp"
#include "advtrain/metrics.hpp"
#include "advtrain/model.hpp"
#include "advtrain/train.hpp"

namespace advtrain {

/// One comparison matrix: every objective is trained with every seed on the
/// same train/dev/test partition.
struct ExperimentConfig {
    DatasetSpec dataset;                              // used when dataset_path is unset
    std::optional<std::filesystem::path> dataset_path;
    std::array<std::size_t, 3> split_sizes = {2000, 500, 500};
    std::uint64_t split_seed = 7;
    std::vector<Objective> objectives = {Objective::Standard, Objective::Adv, Objective::Smart, Objective::Alice};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    ModelConfig model;
    TrainConfig train;  // template; objective and seed are set per cell
    AdvConfig attack = default_attack(0.05);
    std::filesystem::path out_dir = "out";

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

/// Everything that determines results. The output directory is left out.
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);

/// 64-bit FNV-1a of `doc.dump()`, as 16 lowercase hex digits.
std::string config_hash(const nlohmann::json& doc);

struct RunRecord {
    Objective objective = Objective::Standard;
    std::uint64_t seed = 0;
    EvalReport test;  // clean and robust, best-dev parameters
    double dev_accuracy = 0.0;
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
    std::string config_hash;
    std::optional<std::string> error;  // set when the cell failed
};

nlohmann::json to_json(const RunRecord& record);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single run
};

MeanStd mean_std(const std::vector<double>& values);

struct ObjectiveSummary {
    Objective objective = Objective::Standard;
    std::size_t runs = 0;  // successful cells
    std::size_t failures = 0;
    MeanStd clean_accuracy;
    MeanStd robust_accuracy;
    /// Mean over seeds of wall(objective, seed) / wall(standard, seed); unset
    /// without Standard runs to compare against.
    std::optional<double> wall_clock_ratio;
};

struct CompareSummary {
    std::vector<ObjectiveSummary> objectives;  // in config order
    std::vector<RunRecord> runs;               // objective-major, then seed
    std::size_t failures = 0;
};

nlohmann::json to_json(const CompareSummary& summary);
std::string summary_csv(const CompareSummary& summary);

/// Reduces run records to per-objective statistics.
CompareSummary summarize(const std::vector<Objective>& objectives, std::vector<RunRecord> runs);

/// The partition every cell trains on.
Split experiment_splits(const ExperimentConfig& config);

/// Trains and evaluates one cell. Training failures are captured in the
/// record rather than thrown. When `epoch_log` is given the epoch records are
/// written there as JSON lines.
RunRecord run_cell(const ExperimentConfig& config, const Split& splits, Objective objective, std::uint64_t seed,
                   std::ostream* epoch_log = nullptr);

/// Runs the full matrix and writes, under out_dir: data/{train,dev,test}.jsonl,
/// runs/<objective>-<seed>.jsonl, runs/<objective>-<seed>.report.json,
/// summary.json and summary.csv.
CompareSummary compare(const ExperimentConfig& config);

struct GradcheckCase {
    std::string name;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double max_error = 0.0;
};

struct GradcheckSuiteReport {
    std::vector<GradcheckCase> cases;
    double tolerance = 0.0;

    bool passed() const;
};

/// Finite-difference checks of every differentiable op and of the ADV, SMART
/// and ALICE outer losses (perturbations and reference held fixed) on random
/// tiny models, `trials` random draws per case.
GradcheckSuiteReport run_gradcheck_suite(std::uint64_t seed, std::size_t trials = 100, double h = 1e-5,
                                         double tol = 1e-4);

}  // namespace advtrain
