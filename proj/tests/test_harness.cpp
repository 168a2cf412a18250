#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "advtrain/harness.hpp"
#include "config_args.hpp"
#include "support.hpp"

using namespace advtrain;
using Args = std::vector<std::string>;

namespace {

ExperimentConfig small_experiment(const std::filesystem::path& out) {
    ExperimentConfig c;
    c.dataset = testing::small_spec(TaskKind::RelevanceRanking, 80);
    c.split_sizes = {48, 16, 16};
    c.split_seed = 2;
    c.objectives = {Objective::Alice};
    c.seeds = {2};
    c.model.vocab_size = 24;
    c.model.embedding_dim = 4;
    c.model.hidden = {6};
    c.train.learning_rate = 3e-2;
    c.train.batch_size = 16;
    c.train.max_epochs = 2;
    c.out_dir = out;
    return c;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config_to_args: key=value lines") {
    const Args args = cli::config_to_args(
        "# reference setup\n"
        "task = ranking\n"
        "\n"
        "split_sizes=2000,500,500   \n"
        "lr = 0.03  # tuned\n");
    CHECK(args == Args{"--task=ranking", "--split-sizes=2000,500,500", "--lr=0.03"});
}

TEST_CASE("config_to_args: JSON object") {
    const Args args = cli::config_to_args(R"({"epochs": 3, "hidden": [8, 4], "objective": "alice", "lr": 0.5})");
    CHECK(args == Args{"--epochs=3", "--hidden=8,4", "--lr=0.5", "--objective=alice"});
}

TEST_CASE("config_to_args: errors carry the line number") {
    auto message = [](std::string_view text) {
        try {
            cli::config_to_args(text);
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("lr=1\nnot a pair\n").find("line 2") != std::string::npos);
    CHECK(message("=3\n").find("line 1") != std::string::npos);
    CHECK(message("config=other.conf\n") != "no error");
    CHECK(message(R"({"lr": {"nested": 1}})") != "no error");
    CHECK(message(R"({"lr": 1)") != "no error");
}

TEST_CASE("expand_config: file args go right after the subcommand") {
    const auto dir = testing::scratch_dir("expand");
    const auto path = dir / "c.conf";
    std::ofstream(path) << "lr=0.1\nepochs=4\n";
    const Args argv{"advtrain", "train", "--config", path.string(), "--lr", "0.2"};
    CHECK(cli::expand_config(argv) == Args{"advtrain", "train", "--lr=0.1", "--epochs=4", "--config", path.string(), "--lr", "0.2"});
    CHECK(cli::expand_config(Args{"advtrain", "train", "--lr", "1"}) == Args{"advtrain", "train", "--lr", "1"});
    CHECK_THROWS(cli::expand_config(Args{"advtrain", "--config", path.string(), "train"}));
    CHECK_THROWS(cli::expand_config(Args{"advtrain", "train", "--config", (dir / "missing").string()}));
}

TEST_CASE("mean_std") {
    const MeanStd one = mean_std({0.7});
    CHECK(one.mean == 0.7);
    CHECK(one.std == 0.0);
    const MeanStd s = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
    CHECK_THROWS_AS(mean_std({}), std::invalid_argument);
}

TEST_CASE("summarize: wall ratio per seed, failures counted") {
    auto rec = [](Objective o, std::uint64_t seed, double clean, double robust, double wall) {
        RunRecord r;
        r.objective = o;
        r.seed = seed;
        r.test.accuracy = clean;
        r.test.robust_accuracy = robust;
        r.wall_seconds = wall;
        return r;
    };
    std::vector<RunRecord> runs{rec(Objective::Standard, 1, 0.9, 0.7, 1.0), rec(Objective::Standard, 2, 0.8, 0.5, 2.0),
                                rec(Objective::Alice, 1, 1.0, 0.8, 4.0), rec(Objective::Alice, 2, 0.5, 0.6, 4.0)};
    RunRecord failed = rec(Objective::Alice, 3, 0, 0, 1.0);
    failed.error = "training diverged";
    runs.push_back(failed);

    const CompareSummary s = summarize({Objective::Standard, Objective::Alice}, runs);
    REQUIRE(s.objectives.size() == 2);
    CHECK(s.failures == 1);
    const ObjectiveSummary& alice = s.objectives[1];
    CHECK(alice.runs == 2);
    CHECK(alice.failures == 1);
    CHECK(alice.robust_accuracy.mean == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(*alice.wall_clock_ratio == 3.0);  // mean of 4/1 and 4/2
    CHECK(*s.objectives[0].wall_clock_ratio == 1.0);

    const std::string csv = summary_csv(s);
    CHECK(csv.rfind("objective,runs,failures,clean_mean,clean_std,robust_mean,robust_std,wall_clock_ratio\n", 0) == 0);
    CHECK(csv.find("\nalice,2,1,0.75,") != std::string::npos);
    const auto j = to_json(s);
    CHECK(j.at("runs").size() == 5);
    CHECK(j.at("runs")[4].at("error") == "training diverged");
    CHECK_FALSE(j.at("runs")[4].contains("test"));

    const CompareSummary no_standard = summarize({Objective::Alice}, {runs[2]});
    CHECK_FALSE(no_standard.objectives[0].wall_clock_ratio);
    CHECK(summary_csv(no_standard).find("alice,1,0,1,0,0.8,0,\n") != std::string::npos);
}

TEST_CASE("experiment config: JSON round trip, stable hash, validation") {
    ExperimentConfig c = small_experiment("ignored");
    c.objectives = {Objective::Standard, Objective::Smart};
    c.seeds = {4, 9};
    c.train.adv.alpha = 0.25;
    const auto doc = to_json(c);
    CHECK_FALSE(doc.contains("out_dir"));
    const ExperimentConfig back = experiment_config_from_json(doc);
    CHECK(to_json(back) == doc);
    CHECK(config_hash(doc) == config_hash(to_json(back)));
    CHECK(config_hash(doc).size() == 16);
    // FNV-1a offset basis for the empty string
    CHECK(config_hash(nlohmann::json::parse("\"\"")) != config_hash(doc));
    ExperimentConfig moved = c;
    moved.out_dir = "elsewhere";
    CHECK(config_hash(to_json(moved)) == config_hash(doc));
    moved.train.learning_rate = 0.1;
    CHECK(config_hash(to_json(moved)) != config_hash(doc));

    CHECK_NOTHROW(c.validate());
    ExperimentConfig bad = c;
    bad.seeds = {1, 1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.split_sizes = {48, 16, 15};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.model.vocab_size = 30;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = c;
    bad.objectives.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("compare with one cell matches a direct train and evaluate") {
    const auto dir = testing::scratch_dir("compare_one");
    const ExperimentConfig c = small_experiment(dir);
    const CompareSummary s = compare(c);
    REQUIRE(s.runs.size() == 1);
    const RunRecord& cell = s.runs[0];
    REQUIRE_FALSE(cell.error);

    // independent path
    const Split sp = split_counts(generate(c.dataset), c.split_sizes, c.split_seed);
    TrainConfig tc = c.train;
    tc.objective = Objective::Alice;
    tc.seed = 2;
    ModelConfig mc = c.model;
    Rng init(derive_seed(2, "init"));
    const TrainResult direct = train(init_params(mc, init), sp.train, sp.dev, tc);
    const EvalReport report = evaluate(direct.params, sp.test, c.attack);
    CHECK(cell.test.accuracy == report.accuracy);
    CHECK(*cell.test.robust_accuracy == *report.robust_accuracy);
    CHECK(cell.best_epoch == direct.best_epoch);

    for (const char* f : {"data/train.jsonl", "data/dev.jsonl", "data/test.jsonl", "runs/alice-2.jsonl",
                          "runs/alice-2.report.json", "summary.json", "summary.csv"})
        CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
    CHECK(load_dataset(dir / "data" / "test.jsonl") == sp.test);
    const auto summary = nlohmann::json::parse(read_file(dir / "summary.json"));
    CHECK(summary.at("objectives")[0].at("clean_accuracy").at("mean") == report.accuracy);
    CHECK(summary.at("objectives")[0].at("clean_accuracy").at("std") == 0.0);
    const auto rep = nlohmann::json::parse(read_file(dir / "runs" / "alice-2.report.json"));
    CHECK(rep.at("config_hash") == cell.config_hash);
}

TEST_CASE("every cell sees the same partition; hashes differ only by cell") {
    const auto dir = testing::scratch_dir("compare_two");
    ExperimentConfig c = small_experiment(dir);
    c.objectives = {Objective::Standard, Objective::Adv};
    c.seeds = {1, 2};
    c.train.max_epochs = 1;
    const Split a = experiment_splits(c);
    const Split b = experiment_splits(c);
    CHECK(a.test == b.test);
    const CompareSummary s = compare(c);
    REQUIRE(s.runs.size() == 4);
    CHECK(s.runs[0].objective == Objective::Standard);
    CHECK(s.runs[1].seed == 2);
    std::set<std::string> hashes;
    for (const RunRecord& r : s.runs) hashes.insert(r.config_hash);
    CHECK(hashes.size() == 4);
    for (const RunRecord& r : s.runs) CHECK(r.test.n_examples == 16);
}
