// advtrain: generate data, train one objective, evaluate a checkpoint, run
// the comparison matrix, or run the gradient-check suite.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "advtrain/checkpoint.hpp"
#include "advtrain/harness.hpp"
#include "config_args.hpp"

namespace fs = std::filesystem;
using namespace advtrain;

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) throw std::invalid_argument("empty entry in list '" + text + "'");
        items.push_back(item);
    }
    if (items.empty()) throw std::invalid_argument("empty list");
    return items;
}

template <typename T>
T parse_number(const std::string& text) {
    T value{};
    std::istringstream in(text);
    if (!(in >> value) || !in.eof()) throw std::invalid_argument("not a number: '" + text + "'");
    return value;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(text)) out.push_back(parse_number<std::size_t>(item));
    return out;
}

// A single count N means seeds 1..N; a comma list is taken literally.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    if (text.find(',') == std::string::npos) {
        const auto n = parse_number<std::uint64_t>(text);
        if (n == 0) throw std::invalid_argument("--seeds needs at least one seed");
        for (std::uint64_t s = 1; s <= n; ++s) seeds.push_back(s);
        return seeds;
    }
    for (const auto& item : split_list(text)) seeds.push_back(parse_number<std::uint64_t>(item));
    return seeds;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// Flag sets shared between subcommands. The structs hold defaults that the
// parsed flags overwrite.

struct DatasetFlags {
    DatasetSpec spec;
    std::string task = "ranking";

    void add(CLI::App& app) {
        app.add_option("--task", task, "ranking or pairwise")->capture_default_str();
        app.add_option("--num-examples", spec.num_examples, "question groups")->capture_default_str();
        app.add_option("--vocab-size", spec.vocab_size)->capture_default_str();
        app.add_option("--seq-len", spec.seq_len)->capture_default_str();
        app.add_option("--num-options", spec.num_options, "ranking options per question")->capture_default_str();
        app.add_option("--candidates", spec.candidates_per_question, "pairwise candidates per question")
            ->capture_default_str();
        app.add_option("--key-tokens", spec.key_token_count)->capture_default_str();
        app.add_option("--noise", spec.label_noise_rate, "label noise rate")->capture_default_str();
    }
    DatasetSpec resolve() {
        spec.task = parse_task_kind(task);
        return spec;
    }
};

struct TrainFlags {
    TrainConfig train;
    ModelConfig model;
    std::string objective = "standard";
    std::string init = "zero";
    std::string virtual_init = "uniform";
    std::string hidden = "32";
    std::string activation = "relu";

    void add(CLI::App& app, bool with_objective) {
        if (with_objective) app.add_option("--objective", objective, "standard, adv, smart or alice")->capture_default_str();
        app.add_option("--lr", train.learning_rate, "peak learning rate")->capture_default_str();
        app.add_option("--batch-size", train.batch_size)->capture_default_str();
        app.add_option("--epochs", train.max_epochs)->capture_default_str();
        app.add_option("--warmup", train.warmup_ratio, "warmup fraction of all steps")->capture_default_str();
        app.add_option("--clip", train.clip_norm, "global gradient norm bound")->capture_default_str();
        app.add_option("--dropout", train.dropout_rate)->capture_default_str();
        app.add_option("--epsilon", train.adv.epsilon, "perturbation radius (l-inf)")->capture_default_str();
        app.add_option("--step-size", train.adv.step_size, "inner ascent step")->capture_default_str();
        app.add_option("--steps", train.adv.steps, "inner ascent steps")->capture_default_str();
        app.add_option("--alpha", train.adv.alpha, "weight of the smoothness term")->capture_default_str();
        app.add_option("--norm", norm, "perturbation norm (only inf)")->capture_default_str();
        app.add_option("--init", init, "label perturbation start: zero or uniform")->capture_default_str();
        app.add_option("--virtual-init", virtual_init, "smoothness perturbation start: zero or uniform")
            ->capture_default_str();
        app.add_option("--embedding-dim", model.embedding_dim)->capture_default_str();
        app.add_option("--hidden", hidden, "hidden widths, comma separated")->capture_default_str();
        app.add_option("--activation", activation, "relu or tanh")->capture_default_str();
        app.add_option("--init-scale", model.embedding_init_scale, "stddev of embedding init")->capture_default_str();
    }
    void resolve() {
        train.objective = parse_objective(objective);
        train.adv.norm_order = parse_norm_order(norm);
        train.adv.init = parse_delta_init(init);
        train.adv.virtual_init = parse_delta_init(virtual_init);
        model.hidden = parse_sizes(hidden);
        model.activation = parse_activation(activation);
        model.dropout_rate = train.dropout_rate;
    }

    std::string norm = "inf";
};

struct AttackFlags {
    double epsilon = 0.05;
    int steps = 5;
    double step_size = 0.0;  // 0 = epsilon / 4

    void add(CLI::App& app) {
        app.add_option("--eval-epsilon", epsilon, "attack radius for robust accuracy")->capture_default_str();
        app.add_option("--eval-steps", steps, "attack ascent steps")->capture_default_str();
        app.add_option("--eval-step-size", step_size, "attack step (default eval-epsilon / 4)");
    }
    AdvConfig resolve() const {
        AdvConfig a = default_attack(epsilon);
        a.steps = steps;
        if (step_size > 0.0) a.step_size = step_size;
        a.validate();
        return a;
    }
};

int run_generate(DatasetFlags& flags, std::uint64_t seed, const fs::path& out) {
    DatasetSpec spec = flags.resolve();
    spec.seed = seed;
    fs::create_directories(out);
    const fs::path path = out / "dataset.jsonl";
    save_dataset(generate(spec), path);
    std::cout << "wrote " << spec.num_examples << " examples to " << path.string() << "\n";
    return 0;
}

int run_train(TrainFlags& flags, std::uint64_t seed, const std::string& train_path, const std::string& dev_path,
              const std::string& test_path, const AttackFlags& attack, const fs::path& out) {
    flags.resolve();
    flags.train.seed = seed;
    const Dataset train_set = load_dataset(train_path);
    const Dataset dev_set = load_dataset(dev_path);
    flags.model.vocab_size = train_set.spec.vocab_size;

    fs::create_directories(out);
    std::ofstream log(out / "metrics.jsonl", std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + (out / "metrics.jsonl").string());
    Rng init_rng(derive_seed(seed, "init"));
    TrainResult result = train(init_params(flags.model, init_rng), train_set, dev_set, flags.train, &log);
    save_checkpoint(result.params, out / "checkpoint.json");

    nlohmann::json summary{{"best_epoch", result.best_epoch},
                           {"dev_accuracy", result.log[result.best_epoch - 1].dev_accuracy},
                           {"train", to_json(flags.train)},
                           {"model", to_json(flags.model)}};
    if (!test_path.empty()) summary["test"] = to_json(evaluate(result.params, load_dataset(test_path), attack.resolve()));
    write_file(out / "train_report.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& data, bool robust, const AttackFlags& attack,
                 const std::string& out) {
    const ModelParams params = load_checkpoint(checkpoint);
    const Dataset dataset = load_dataset(data);
    std::optional<AdvConfig> cfg;
    if (robust) cfg = attack.resolve();
    const std::string report = to_json(evaluate(params, dataset, cfg)).dump(2) + "\n";
    if (!out.empty()) {
        fs::create_directories(out);
        write_file(fs::path(out) / "report.json", report);
    }
    std::cout << report;
    return 0;
}

int run_compare(ExperimentConfig cfg) {
    const CompareSummary summary = compare(cfg);
    std::cout << summary_csv(summary);
    if (summary.failures != 0) {
        for (const RunRecord& r : summary.runs)
            if (r.error) std::cerr << to_string(r.objective) << "-" << r.seed << " failed: " << *r.error << "\n";
        return 1;
    }
    return 0;
}

int run_gradcheck(std::uint64_t seed, std::size_t trials, double h, double tol, const std::string& out) {
    const GradcheckSuiteReport report = run_gradcheck_suite(seed, trials, h, tol);
    nlohmann::json doc{{"tolerance", tol}, {"h", h}, {"trials", trials}, {"passed", report.passed()}};
    for (const GradcheckCase& c : report.cases) {
        std::cout << (c.failures == 0 ? "PASS " : "FAIL ") << c.name << "  max_rel_err=" << c.max_error << "  ("
                  << c.trials - c.failures << "/" << c.trials << ")\n";
        doc["cases"].push_back({{"name", c.name}, {"failures", c.failures}, {"max_error", c.max_error}});
    }
    std::cout << (report.passed() ? "gradcheck: all cases passed" : "gradcheck: FAILED") << " at tol=" << tol << "\n";
    if (!out.empty()) {
        fs::create_directories(out);
        write_file(fs::path(out) / "gradcheck.json", doc.dump(2) + "\n");
    }
    return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    try {
        args = cli::expand_config(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    CLI::App app{"Adversarial training toolkit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    std::string config_path, out = "out";
    auto common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "random seed")->capture_default_str();
        sub->add_option("--config", config_path, "key=value or JSON file; explicit flags win");
    };

    DatasetFlags gen_flags;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset to <out>/dataset.jsonl");
    common(gen);
    gen_flags.add(*gen);
    gen->add_option("--out", out, "output directory")->capture_default_str();

    TrainFlags train_flags;
    AttackFlags train_attack;
    std::string train_path, dev_path, test_path;
    auto* tr = app.add_subcommand("train", "train one objective; writes metrics.jsonl and checkpoint.json");
    common(tr);
    train_flags.add(*tr, true);
    train_attack.add(*tr);
    tr->add_option("--train", train_path, "training dataset file")->required();
    tr->add_option("--dev", dev_path, "dev dataset file")->required();
    tr->add_option("--test", test_path, "optional test dataset, evaluated with the attack");
    tr->add_option("--out", out, "output directory")->capture_default_str();

    AttackFlags eval_attack;
    std::string checkpoint_path, eval_data, eval_out;
    bool robust = false;
    auto* ev = app.add_subcommand("evaluate", "clean (and with --robust, attacked) metrics of a checkpoint");
    common(ev);
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--data", eval_data, "dataset file")->required();
    ev->add_flag("--robust", robust, "also report robust accuracy");
    eval_attack.add(*ev);
    ev->add_option("--out", eval_out, "directory for report.json");

    DatasetFlags cmp_data;
    TrainFlags cmp_train;
    AttackFlags cmp_attack;
    ExperimentConfig experiment;
    std::string objectives = "standard,adv,smart,alice", seeds = "5", splits = "2000,500,500", data_path;
    auto* cmp = app.add_subcommand("compare", "objective x seed matrix on shared splits");
    common(cmp);
    cmp_data.add(*cmp);
    cmp_train.add(*cmp, false);
    cmp_attack.add(*cmp);
    cmp->add_option("--objectives", objectives, "comma separated")->capture_default_str();
    cmp->add_option("--seeds", seeds, "count N (seeds 1..N) or a comma list")->capture_default_str();
    cmp->add_option("--split-sizes", splits, "train,dev,test; generated data has exactly this many")
        ->capture_default_str();
    cmp->add_option("--split-seed", experiment.split_seed)->capture_default_str();
    cmp->add_option("--data", data_path, "dataset file instead of generating one");
    cmp->add_option("--out", out, "output directory")->capture_default_str();

    std::size_t trials = 100;
    double h = 1e-5, tol = 1e-4;
    std::string gc_out;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and objective");
    common(gc);
    gc->add_option("--trials", trials, "random draws per case")->capture_default_str();
    gc->add_option("--fd-step", h, "central-difference step")->capture_default_str();
    gc->add_option("--tol", tol, "relative error tolerance")->capture_default_str();
    gc->add_option("--out", gc_out, "directory for gradcheck.json");

    try {
        std::vector<const char*> cargs;
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) return run_generate(gen_flags, seed, out);
        if (tr->parsed()) return run_train(train_flags, seed, train_path, dev_path, test_path, train_attack, out);
        if (ev->parsed()) return run_evaluate(checkpoint_path, eval_data, robust, eval_attack, eval_out);
        if (gc->parsed()) return run_gradcheck(seed, trials, h, tol, gc_out);

        cmp_train.resolve();
        experiment.dataset = cmp_data.resolve();
        experiment.dataset.seed = seed;
        const auto sizes = parse_sizes(splits);
        if (sizes.size() != 3) throw std::invalid_argument("--split-sizes needs three values");
        experiment.split_sizes = {sizes[0], sizes[1], sizes[2]};
        if (data_path.empty()) {
            experiment.dataset.num_examples = sizes[0] + sizes[1] + sizes[2];
        } else {
            experiment.dataset_path = data_path;
        }
        experiment.objectives.clear();
        for (const auto& o : split_list(objectives)) experiment.objectives.push_back(parse_objective(o));
        experiment.seeds = parse_seeds(seeds);
        experiment.model = cmp_train.model;
        experiment.model.vocab_size = experiment.dataset.vocab_size;
        experiment.train = cmp_train.train;
        experiment.attack = cmp_attack.resolve();
        experiment.out_dir = out;
        return run_compare(experiment);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
