#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"

#include "advtrain/model.hpp"

namespace advtrain {

inline constexpr int kPadToken = 0;
inline constexpr const char* kDatasetFormat = "advtrain-dataset";
inline constexpr int kDatasetVersion = 1;

/// Parameters of the synthetic key-token task.
///
/// Vocabulary layout: 0 is padding, [1, K] are key tokens, [K+1, 2K] are
/// answer tokens and the rest are fillers, where K = key_token_count.
struct DatasetSpec {
    TaskKind task = TaskKind::RelevanceRanking;
    std::size_t num_examples = 1000;
    std::size_t vocab_size = 64;
    std::size_t seq_len = 12;
    std::size_t num_options = 4;              // ranking
    std::size_t candidates_per_question = 4;  // pairwise
    std::size_t key_token_count = 8;
    double label_noise_rate = 0.0;
    std::uint64_t seed = 1;

    std::size_t group_size() const {
        return task == TaskKind::RelevanceRanking ? num_options : candidates_per_question;
    }
    int key_token(std::size_t key) const { return static_cast<int>(1 + key); }
    int answer_token(std::size_t answer) const { return static_cast<int>(1 + key_token_count + answer); }
    int first_filler() const { return static_cast<int>(1 + 2 * key_token_count); }

    void validate() const;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& doc);

/// One question with its candidate sequences (unpadded, each <= seq_len).
/// Ranking: labels holds the single correct index. Pairwise: one 0/1 label per
/// candidate.
struct ExampleGroup {
    int group_id = 0;
    std::vector<std::vector<int>> sequences;
    std::vector<int> labels;

    friend bool operator==(const ExampleGroup&, const ExampleGroup&) = default;
};

struct Dataset {
    DatasetSpec spec;
    std::vector<ExampleGroup> examples;

    std::size_t size() const { return examples.size(); }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// The seeded permutation g over key indices: the answer for key k is
/// answer_token(g[k]).
std::vector<std::size_t> key_bijection(const DatasetSpec& spec);

/// Deterministic generation. Each context holds one key token among fillers;
/// the correct option (ranking) or plausible candidates (pairwise) end with
/// the answer token of that key, the rest with answers of other keys. Labels
/// are then flipped with probability label_noise_rate.
Dataset generate(const DatasetSpec& spec);

/// Pads the selected groups into a batch. Ranking groups must all have
/// num_options sequences.
TokenBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);
TokenBatch make_batch(const Dataset& dataset);

struct Split {
    Dataset train;
    Dataset dev;
    Dataset test;
};

/// Shuffled (seeded) three-way partition. Train and dev sizes are
/// floor(fraction * n); test takes the remainder.
Split split(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed);
Split split_counts(const Dataset& dataset, std::array<std::size_t, 3> counts, std::uint64_t seed);

/// k shuffled folds whose sizes differ by at most one (larger folds first).
std::vector<Dataset> kfold(const Dataset& dataset, std::size_t k, std::uint64_t seed);

/// Dataset restricted to the given example indices, in order.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

/// JSON-lines: a header record carrying the format tag, version and spec,
/// then one record per example group.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& dataset, std::ostream& out);
Dataset read_dataset(std::istream& in);

}  // namespace advtrain
