#include "advtrain/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace advtrain {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
    if (objectives.empty()) throw std::invalid_argument("experiment needs at least one objective");
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    for (std::size_t i = 0; i < objectives.size(); ++i)
        for (std::size_t j = i + 1; j < objectives.size(); ++j)
            if (objectives[i] == objectives[j])
                throw std::invalid_argument("objective '" + std::string(to_string(objectives[i])) + "' listed twice");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j]) throw std::invalid_argument("seed " + std::to_string(seeds[i]) + " listed twice");
    if (split_sizes[0] == 0 || split_sizes[1] == 0 || split_sizes[2] == 0)
        throw std::invalid_argument("train, dev and test splits must all be non-empty");
    if (!dataset_path) {
        dataset.validate();
        if (dataset.num_examples != split_sizes[0] + split_sizes[1] + split_sizes[2])
            throw std::invalid_argument("dataset size must equal the sum of the split sizes");
        if (model.vocab_size != dataset.vocab_size)
            throw std::invalid_argument("model vocab_size differs from the dataset's");
    }
    train.validate();
    attack.validate();
}

json to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"embedding_dim", c.embedding_dim},
                {"hidden", c.hidden},
                {"activation", std::string(to_string(c.activation))},
                {"embedding_init_scale", c.embedding_init_scale}};
}

ModelConfig model_config_from_json(const json& doc) {
    ModelConfig c;
    c.vocab_size = doc.at("vocab_size").get<std::size_t>();
    c.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
    c.hidden = doc.at("hidden").get<std::vector<std::size_t>>();
    c.activation = parse_activation(doc.at("activation").get<std::string>());
    c.embedding_init_scale = doc.at("embedding_init_scale").get<double>();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json objectives = json::array();
    for (Objective o : c.objectives) objectives.push_back(std::string(to_string(o)));
    json doc{{"dataset", to_json(c.dataset)},
             {"split_sizes", c.split_sizes},
             {"split_seed", c.split_seed},
             {"objectives", objectives},
             {"seeds", c.seeds},
             {"model", to_json(c.model)},
             {"train", to_json(c.train)},
             {"attack", to_json(c.attack)}};
    doc["dataset_path"] = c.dataset_path ? json(c.dataset_path->string()) : json(nullptr);
    return doc;
}

ExperimentConfig experiment_config_from_json(const json& doc) {
    ExperimentConfig c;
    c.dataset = dataset_spec_from_json(doc.at("dataset"));
    if (doc.contains("dataset_path") && !doc.at("dataset_path").is_null())
        c.dataset_path = doc.at("dataset_path").get<std::string>();
    c.split_sizes = doc.at("split_sizes").get<std::array<std::size_t, 3>>();
    c.split_seed = doc.at("split_seed").get<std::uint64_t>();
    c.objectives.clear();
    for (const auto& o : doc.at("objectives")) c.objectives.push_back(parse_objective(o.get<std::string>()));
    c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    c.model = model_config_from_json(doc.at("model"));
    c.train = train_config_from_json(doc.at("train"));
    c.attack = adv_config_from_json(doc.at("attack"));
    c.validate();
    return c;
}

std::string config_hash(const json& doc) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : doc.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
}

json to_json(const RunRecord& r) {
    json doc{{"objective", std::string(to_string(r.objective))},
             {"seed", r.seed},
             {"config_hash", r.config_hash},
             {"wall_seconds", r.wall_seconds}};
    if (r.error) {
        doc["error"] = *r.error;
        return doc;
    }
    doc["error"] = nullptr;
    doc["best_epoch"] = r.best_epoch;
    doc["dev_accuracy"] = r.dev_accuracy;
    doc["test"] = to_json(r.test);
    return doc;
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean of no values");
    MeanStd s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

CompareSummary summarize(const std::vector<Objective>& objectives, std::vector<RunRecord> runs) {
    CompareSummary summary;
    std::map<std::uint64_t, double> standard_wall;
    for (const RunRecord& r : runs)
        if (r.objective == Objective::Standard && !r.error) standard_wall[r.seed] = r.wall_seconds;

    for (Objective objective : objectives) {
        ObjectiveSummary s;
        s.objective = objective;
        std::vector<double> clean, robust, ratios;
        for (const RunRecord& r : runs) {
            if (r.objective != objective) continue;
            if (r.error) {
                ++s.failures;
                continue;
            }
            ++s.runs;
            clean.push_back(r.test.accuracy);
            if (r.test.robust_accuracy) robust.push_back(*r.test.robust_accuracy);
            auto it = standard_wall.find(r.seed);
            if (it != standard_wall.end() && it->second > 0.0) ratios.push_back(r.wall_seconds / it->second);
        }
        if (!clean.empty()) s.clean_accuracy = mean_std(clean);
        if (!robust.empty()) s.robust_accuracy = mean_std(robust);
        if (!ratios.empty()) s.wall_clock_ratio = mean_std(ratios).mean;
        summary.failures += s.failures;
        summary.objectives.push_back(s);
    }
    summary.runs = std::move(runs);
    return summary;
}

json to_json(const CompareSummary& summary) {
    json rows = json::array();
    for (const ObjectiveSummary& s : summary.objectives) {
        rows.push_back(json{
            {"objective", std::string(to_string(s.objective))},
            {"runs", s.runs},
            {"failures", s.failures},
            {"clean_accuracy", {{"mean", s.clean_accuracy.mean}, {"std", s.clean_accuracy.std}}},
            {"robust_accuracy", {{"mean", s.robust_accuracy.mean}, {"std", s.robust_accuracy.std}}},
            {"wall_clock_ratio", s.wall_clock_ratio ? json(*s.wall_clock_ratio) : json(nullptr)},
        });
    }
    json runs = json::array();
    for (const RunRecord& r : summary.runs) runs.push_back(to_json(r));
    return json{{"objectives", rows}, {"runs", runs}, {"failures", summary.failures}};
}

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw std::runtime_error("cannot format number");
    return std::string(buf, end);
}

}  // namespace

std::string summary_csv(const CompareSummary& summary) {
    std::string out = "objective,runs,failures,clean_mean,clean_std,robust_mean,robust_std,wall_clock_ratio\n";
    for (const ObjectiveSummary& s : summary.objectives) {
        out += std::string(to_string(s.objective)) + ',' + std::to_string(s.runs) + ',' + std::to_string(s.failures) +
               ',' + shortest(s.clean_accuracy.mean) + ',' + shortest(s.clean_accuracy.std) + ',' +
               shortest(s.robust_accuracy.mean) + ',' + shortest(s.robust_accuracy.std) + ',' +
               (s.wall_clock_ratio ? shortest(*s.wall_clock_ratio) : std::string()) + '\n';
    }
    return out;
}

Split experiment_splits(const ExperimentConfig& config) {
    Dataset full = config.dataset_path ? load_dataset(*config.dataset_path) : generate(config.dataset);
    if (full.spec.vocab_size != config.model.vocab_size)
        throw std::invalid_argument("dataset vocab_size " + std::to_string(full.spec.vocab_size) +
                                    " differs from the model's " + std::to_string(config.model.vocab_size));
    return split_counts(full, config.split_sizes, config.split_seed);
}

RunRecord run_cell(const ExperimentConfig& config, const Split& splits, Objective objective, std::uint64_t seed,
                   std::ostream* epoch_log) {
    RunRecord record;
    record.objective = objective;
    record.seed = seed;

    TrainConfig tc = config.train;
    tc.objective = objective;
    tc.seed = seed;
    json resolved = to_json(config);
    resolved.erase("objectives");
    resolved.erase("seeds");
    resolved["train"] = to_json(tc);
    record.config_hash = config_hash(resolved);

    const auto start = std::chrono::steady_clock::now();
    try {
        ModelConfig mc = config.model;
        mc.dropout_rate = tc.dropout_rate;
        Rng init_rng(derive_seed(seed, "init"));
        TrainResult result = train(init_params(mc, init_rng), splits.train, splits.dev, tc, epoch_log);
        record.best_epoch = result.best_epoch;
        record.dev_accuracy = result.log[result.best_epoch - 1].dev_accuracy;
        record.test = evaluate(result.params, splits.test, config.attack);
    } catch (const std::exception& e) {
        record.error = e.what();
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

CompareSummary compare(const ExperimentConfig& config) {
    config.validate();
    const Split splits = experiment_splits(config);
    const fs::path runs_dir = config.out_dir / "runs";
    fs::create_directories(runs_dir);
    fs::create_directories(config.out_dir / "data");
    save_dataset(splits.train, config.out_dir / "data" / "train.jsonl");
    save_dataset(splits.dev, config.out_dir / "data" / "dev.jsonl");
    save_dataset(splits.test, config.out_dir / "data" / "test.jsonl");

    std::vector<RunRecord> runs;
    for (Objective objective : config.objectives) {
        for (std::uint64_t seed : config.seeds) {
            const std::string stem = std::string(to_string(objective)) + "-" + std::to_string(seed);
            std::ostringstream log;
            RunRecord record = run_cell(config, splits, objective, seed, &log);
            write_text(runs_dir / (stem + ".jsonl"), log.str());
            write_text(runs_dir / (stem + ".report.json"), to_json(record).dump(2) + "\n");
            runs.push_back(std::move(record));
        }
    }

    CompareSummary summary = summarize(config.objectives, std::move(runs));
    write_text(config.out_dir / "summary.json", to_json(summary).dump(2) + "\n");
    write_text(config.out_dir / "summary.csv", summary_csv(summary));
    return summary;
}

}  // namespace advtrain
