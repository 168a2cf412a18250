#include "advtrain/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "advtrain/rng.hpp"

namespace advtrain {

using nlohmann::json;

void DatasetSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid dataset spec: " + what); };
    if (num_examples == 0) fail("num_examples must be positive");
    if (seq_len < 2) fail("seq_len must be at least 2");
    if (key_token_count < 2) fail("key_token_count must be at least 2");
    if (key_token_count >= vocab_size) fail("key_token_count must be below vocab_size");
    if (2 * key_token_count + 2 > vocab_size) fail("vocab_size must hold padding, keys, answers and a filler");
    if (group_size() == 0) fail("group size must be positive");
    if (task == TaskKind::RelevanceRanking && num_options < 2) fail("ranking needs at least 2 options");
    if (task == TaskKind::RelevanceRanking && num_options > key_token_count) {
        fail("ranking needs key_token_count >= num_options for distinct distractors");
    }
    if (!(label_noise_rate >= 0.0 && label_noise_rate < 1.0)) fail("label_noise_rate must be in [0, 1)");
}

json to_json(const DatasetSpec& spec) {
    return json{{"task", std::string(to_string(spec.task))},
                {"num_examples", spec.num_examples},
                {"vocab_size", spec.vocab_size},
                {"seq_len", spec.seq_len},
                {"num_options", spec.num_options},
                {"candidates_per_question", spec.candidates_per_question},
                {"key_token_count", spec.key_token_count},
                {"label_noise_rate", spec.label_noise_rate},
                {"seed", spec.seed}};
}

DatasetSpec dataset_spec_from_json(const json& doc) {
    DatasetSpec spec;
    spec.task = parse_task_kind(doc.at("task").get<std::string>());
    spec.num_examples = doc.at("num_examples").get<std::size_t>();
    spec.vocab_size = doc.at("vocab_size").get<std::size_t>();
    spec.seq_len = doc.at("seq_len").get<std::size_t>();
    spec.num_options = doc.at("num_options").get<std::size_t>();
    spec.candidates_per_question = doc.at("candidates_per_question").get<std::size_t>();
    spec.key_token_count = doc.at("key_token_count").get<std::size_t>();
    spec.label_noise_rate = doc.at("label_noise_rate").get<double>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
}

std::vector<std::size_t> key_bijection(const DatasetSpec& spec) {
    std::vector<std::size_t> g(spec.key_token_count);
    std::iota(g.begin(), g.end(), std::size_t{0});
    Rng rng(derive_seed(spec.seed, "bijection"));
    rng.shuffle(g);
    return g;
}

namespace {

std::vector<int> make_context(const DatasetSpec& spec, std::size_t key, Rng& rng) {
    const std::size_t max_len = spec.seq_len - 1;  // one slot for the answer
    const std::size_t min_len = std::max<std::size_t>(1, max_len / 2);
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    const std::size_t fillers = spec.vocab_size - static_cast<std::size_t>(spec.first_filler());
    std::vector<int> ctx(len);
    for (int& t : ctx) t = spec.first_filler() + static_cast<int>(rng.below(fillers));
    ctx[rng.below(len)] = spec.key_token(key);
    return ctx;
}

std::size_t other_key(const DatasetSpec& spec, std::size_t key, Rng& rng) {
    const std::size_t k = rng.below(spec.key_token_count - 1);
    return k >= key ? k + 1 : k;
}

}  // namespace

Dataset generate(const DatasetSpec& spec) {
    spec.validate();
    const auto g = key_bijection(spec);
    Rng rng(derive_seed(spec.seed, "examples"));
    Rng noise(derive_seed(spec.seed, "noise"));

    Dataset ds;
    ds.spec = spec;
    ds.examples.reserve(spec.num_examples);
    for (std::size_t n = 0; n < spec.num_examples; ++n) {
        const std::size_t key = rng.below(spec.key_token_count);
        const std::vector<int> ctx = make_context(spec, key, rng);
        ExampleGroup group;
        group.group_id = static_cast<int>(n);

        auto with_answer = [&](std::size_t answer_key) {
            std::vector<int> seq = ctx;
            seq.push_back(spec.answer_token(g[answer_key]));
            return seq;
        };

        if (spec.task == TaskKind::RelevanceRanking) {
            const std::size_t correct = rng.below(spec.num_options);
            // distinct distractor keys, all different from the true key
            std::vector<std::size_t> pool;
            for (std::size_t k = 0; k < spec.key_token_count; ++k)
                if (k != key) pool.push_back(k);
            rng.shuffle(pool);
            std::size_t next = 0;
            for (std::size_t o = 0; o < spec.num_options; ++o) {
                group.sequences.push_back(with_answer(o == correct ? key : pool[next++]));
            }
            int label = static_cast<int>(correct);
            if (noise.bernoulli(spec.label_noise_rate)) {
                const std::size_t shift = 1 + noise.below(spec.num_options - 1);
                label = static_cast<int>((correct + shift) % spec.num_options);
            }
            group.labels = {label};
        } else {
            for (std::size_t c = 0; c < spec.candidates_per_question; ++c) {
                const bool plausible = rng.bernoulli(0.5);
                group.sequences.push_back(with_answer(plausible ? key : other_key(spec, key, rng)));
                int label = plausible ? 1 : 0;
                if (noise.bernoulli(spec.label_noise_rate)) label = 1 - label;
                group.labels.push_back(label);
            }
        }
        ds.examples.push_back(std::move(group));
    }
    return ds;
}

TokenBatch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    const DatasetSpec& spec = dataset.spec;
    if (indices.empty()) throw std::invalid_argument("cannot batch zero examples");
    TokenBatch b;
    b.task = spec.task;
    b.seq_len = spec.seq_len;

    auto append = [&](const std::vector<int>& seq) {
        if (seq.size() > spec.seq_len) {
            throw std::invalid_argument("sequence of length " + std::to_string(seq.size()) + " exceeds seq_len " +
                                        std::to_string(spec.seq_len));
        }
        for (std::size_t t = 0; t < spec.seq_len; ++t) {
            const bool live = t < seq.size();
            b.tokens.push_back(live ? seq[t] : kPadToken);
            b.pad_mask.push_back(live ? 1 : 0);
        }
    };

    if (spec.task == TaskKind::RelevanceRanking) {
        b.batch = indices.size();
        b.options = spec.num_options;
        for (std::size_t i : indices) {
            const ExampleGroup& g = dataset.examples.at(i);
            if (g.sequences.size() != spec.num_options || g.labels.size() != 1) {
                throw std::invalid_argument("ranking group " + std::to_string(g.group_id) + " is malformed");
            }
            for (const auto& seq : g.sequences) append(seq);
            b.labels.push_back(g.labels[0]);
        }
    } else {
        b.options = 1;
        for (std::size_t i : indices) {
            const ExampleGroup& g = dataset.examples.at(i);
            if (g.sequences.size() != g.labels.size()) {
                throw std::invalid_argument("pairwise group " + std::to_string(g.group_id) + " is malformed");
            }
            for (std::size_t c = 0; c < g.sequences.size(); ++c) {
                append(g.sequences[c]);
                b.labels.push_back(g.labels[c]);
                b.group_ids.push_back(g.group_id);
            }
        }
        b.batch = b.labels.size();
    }
    return b;
}

TokenBatch make_batch(const Dataset& dataset) {
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return make_batch(dataset, all);
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
    Dataset out;
    out.spec = dataset.spec;
    out.examples.reserve(indices.size());
    for (std::size_t i : indices) out.examples.push_back(dataset.examples.at(i));
    out.spec.num_examples = out.examples.size();
    return out;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(idx);
    return idx;
}

}  // namespace

Split split_counts(const Dataset& dataset, std::array<std::size_t, 3> counts, std::uint64_t seed) {
    if (counts[0] + counts[1] + counts[2] != dataset.size()) {
        throw std::invalid_argument("split counts must add up to the dataset size " + std::to_string(dataset.size()));
    }
    const auto idx = shuffled_indices(dataset.size(), seed);
    const std::span<const std::size_t> all(idx);
    return Split{subset(dataset, all.subspan(0, counts[0])), subset(dataset, all.subspan(counts[0], counts[1])),
                 subset(dataset, all.subspan(counts[0] + counts[1]))};
}

Split split(const Dataset& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
    const double n = static_cast<double>(dataset.size());
    const auto train = static_cast<std::size_t>(std::floor(fractions[0] * n + 1e-9));
    const auto dev = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));
    if (train + dev > dataset.size()) throw std::invalid_argument("split fractions exceed the dataset");
    return split_counts(dataset, {train, dev, dataset.size() - train - dev}, seed);
}

std::vector<Dataset> kfold(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kfold needs k >= 2");
    if (k > dataset.size()) throw std::invalid_argument("kfold needs at least k examples");
    const auto idx = shuffled_indices(dataset.size(), seed);
    const std::size_t base = dataset.size() / k;
    const std::size_t extra = dataset.size() % k;
    std::vector<Dataset> folds;
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        folds.push_back(subset(dataset, std::span<const std::size_t>(idx).subspan(start, len)));
        start += len;
    }
    return folds;
}

void write_dataset(const Dataset& dataset, std::ostream& out) {
    out << json{{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"spec", to_json(dataset.spec)}}.dump()
        << '\n';
    const std::string task(to_string(dataset.spec.task));
    for (const ExampleGroup& g : dataset.examples) {
        out << json{{"group_id", g.group_id}, {"task", task}, {"tokens", g.sequences}, {"labels", g.labels}}.dump()
            << '\n';
    }
}

namespace {

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
    throw std::runtime_error("dataset line " + std::to_string(line) + ": " + what);
}

ExampleGroup parse_group(const json& rec, const DatasetSpec& spec, std::size_t line) {
    ExampleGroup g;
    try {
        if (rec.at("task").get<std::string>() != to_string(spec.task)) line_error(line, "task kind differs from header");
        g.group_id = rec.at("group_id").get<int>();
        g.sequences = rec.at("tokens").get<std::vector<std::vector<int>>>();
        g.labels = rec.at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
        line_error(line, std::string("malformed record: ") + e.what());
    }
    if (g.sequences.empty()) line_error(line, "group has no sequences");
    for (const auto& seq : g.sequences) {
        if (seq.size() > spec.seq_len) line_error(line, "sequence longer than seq_len");
        for (int t : seq)
            if (t < 0 || static_cast<std::size_t>(t) >= spec.vocab_size) line_error(line, "token id out of range");
    }
    if (spec.task == TaskKind::RelevanceRanking) {
        if (g.sequences.size() != spec.num_options) line_error(line, "wrong number of options");
        if (g.labels.size() != 1 || g.labels[0] < 0 || static_cast<std::size_t>(g.labels[0]) >= spec.num_options)
            line_error(line, "ranking label out of range");
    } else {
        if (g.labels.size() != g.sequences.size()) line_error(line, "one label per candidate required");
        for (int y : g.labels)
            if (y != 0 && y != 1) line_error(line, "pairwise label must be 0 or 1");
    }
    return g;
}

}  // namespace

Dataset read_dataset(std::istream& in) {
    std::string text;
    std::size_t line = 0;
    if (!std::getline(in, text)) line_error(1, "missing header record");
    ++line;
    Dataset ds;
    try {
        const json header = json::parse(text);
        if (header.value("format", std::string{}) != kDatasetFormat) line_error(line, "not a dataset file");
        const int version = header.value("version", -1);
        if (version != kDatasetVersion) line_error(line, "unsupported dataset version " + std::to_string(version));
        ds.spec = dataset_spec_from_json(header.at("spec"));
    } catch (const json::exception& e) {
        line_error(line, std::string("malformed header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        line_error(line, e.what());
    }
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) continue;
        json rec;
        try {
            rec = json::parse(text);
        } catch (const json::parse_error& e) {
            line_error(line, std::string("malformed record: ") + e.what());
        }
        ds.examples.push_back(parse_group(rec, ds.spec, line));
    }
    if (ds.examples.size() != ds.spec.num_examples) {
        line_error(line + 1, "expected " + std::to_string(ds.spec.num_examples) + " records, found " +
                                 std::to_string(ds.examples.size()) + " (file truncated?)");
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write dataset " + path.string());
    write_dataset(dataset, out);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset " + path.string());
    return read_dataset(in);
}

}  // namespace advtrain
