#pragma once

// Small fixtures shared by the test binaries.

#include <cstddef>
#include <filesystem>
#include <string>

#include "advtrain/data.hpp"
#include "advtrain/model.hpp"
#include "advtrain/rng.hpp"

namespace testing {

inline advtrain::ModelParams tiny_model(advtrain::Rng& rng, std::size_t vocab = 9, std::size_t dim = 3,
                                        advtrain::Activation act = advtrain::Activation::Tanh,
                                        double dropout = 0.0) {
    advtrain::ModelConfig mc;
    mc.vocab_size = vocab;
    mc.embedding_dim = dim;
    mc.hidden = {5};
    mc.activation = act;
    mc.dropout_rate = dropout;
    return advtrain::init_params(mc, rng);
}

inline advtrain::DatasetSpec small_spec(advtrain::TaskKind task, std::size_t n, std::uint64_t seed = 3) {
    advtrain::DatasetSpec s;
    s.task = task;
    s.num_examples = n;
    s.vocab_size = 24;
    s.seq_len = 6;
    s.num_options = 3;
    s.candidates_per_question = 3;
    s.key_token_count = 4;
    s.seed = seed;
    return s;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("advtrain_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
