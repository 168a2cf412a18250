#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advtrain/ops.hpp"
#include "advtrain/rng.hpp"
#include "advtrain/tape.hpp"
#include "advtrain/tensor.hpp"

namespace advtrain {

enum class TaskKind { RelevanceRanking, PairwiseClassification };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

enum class Activation { Relu, Tanh };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

struct DenseLayer {
    Tensor weight;  // [in x out]
    Tensor bias;    // [out]
    Activation activation = Activation::Relu;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Trainable parameters: embedding table, feed-forward encoder over the
/// pooled embeddings, and one head per task format sharing that trunk.
struct ModelParams {
    Tensor embedding;                 // [vocab x d_emb]
    std::vector<DenseLayer> encoder;  // may be empty
    Tensor head_rank;                 // [hidden x 1], one score per option
    Tensor head_pair_weight;          // [hidden x 2]
    Tensor head_pair_bias;            // [2]
    double dropout_rate = 0.1;

    std::size_t vocab_size() const { return embedding.dim(0); }
    std::size_t embedding_dim() const { return embedding.dim(1); }
    std::size_t output_dim() const;

    /// Throws std::invalid_argument if shapes are inconsistent or dropout_rate is outside [0, 1).
    void validate() const;

    /// Parameter tensors in a fixed order: embedding, encoder weight/bias
    /// pairs, head_rank, head_pair_weight, head_pair_bias.
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> tensor_names() const;

    std::size_t parameter_count() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Bitwise equality of every parameter tensor and the dropout rate.
bool bitwise_equal(const ModelParams& a, const ModelParams& b);

struct ModelConfig {
    std::size_t vocab_size = 64;
    std::size_t embedding_dim = 16;
    std::vector<std::size_t> hidden = {32};
    Activation activation = Activation::Relu;
    double dropout_rate = 0.1;
    double embedding_init_scale = 1.0;  // stddev of the normal embedding init
};

/// Normal embeddings, Glorot-uniform dense weights, zero biases.
ModelParams init_params(const ModelConfig& config, Rng& rng);

/// A batch in one of the two task formats.
///
/// Ranking: tokens are [batch x options x seq_len], labels hold the correct
/// option per example. Pairwise: tokens are [batch x seq_len] with one row per
/// (question, candidate) pair, labels are 0/1 per row and group_ids name the
/// question each row belongs to.
struct TokenBatch {
    TaskKind task = TaskKind::RelevanceRanking;
    std::size_t batch = 0;
    std::size_t options = 1;  // 1 for pairwise
    std::size_t seq_len = 0;
    std::vector<int> tokens;
    std::vector<std::uint8_t> pad_mask;  // 1 = live token
    std::vector<int> labels;             // empty when unlabeled
    std::vector<int> group_ids;          // pairwise only

    std::size_t sequences() const { return batch * options; }
    Shape token_shape() const;
    Shape embedding_shape(std::size_t embedding_dim) const;
    Shape logits_shape() const;

    /// Structural checks; token ids are checked against vocab_size.
    void validate(std::size_t vocab_size) const;
};

/// Embedded input with no gradient attached; the site where perturbations are added.
struct EmbeddedBatch {
    Tensor embeddings;
    const TokenBatch* source = nullptr;
};

/// Parameters placed on a tape, either as trainable leaves or as constants.
struct BoundParams {
    Var embedding;
    std::vector<std::pair<Var, Var>> encoder;
    std::vector<Activation> activations;
    Var head_rank;
    Var head_pair_weight;
    Var head_pair_bias;
    double dropout_rate = 0.0;

    std::vector<Var> vars() const;
};

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable);

/// Gradients of trainable bound parameters in ModelParams::tensors() order.
std::vector<Tensor> gradients(const Tape& tape, const BoundParams& bound);

struct ForwardOptions {
    bool train = false;
    Rng* dropout_rng = nullptr;  // required when train and dropout_rate > 0
};

EmbeddedBatch embed(const ModelParams& params, const TokenBatch& batch);

/// On-tape lookup so gradients reach the embedding table.
Var embed(const BoundParams& params, const TokenBatch& batch);

/// Pools, encodes and scores. `delta`, when given, must have the embedding
/// shape and is added before pooling. Ranking gives [batch x options] logits,
/// pairwise gives [batch x 2].
Var forward_from_embeddings(const BoundParams& params, const TokenBatch& batch, Var embeddings,
                            std::optional<Var> delta, const ForwardOptions& options);

Var forward(const BoundParams& params, const TokenBatch& batch, const ForwardOptions& options);

/// Value-level convenience wrappers on a private tape.
Tensor forward(const ModelParams& params, const TokenBatch& batch, const ForwardOptions& options = {});
Tensor forward_from_embeddings(const ModelParams& params, const EmbeddedBatch& emb, const Tensor* delta,
                               const ForwardOptions& options = {});

/// Argmax option per example (ranking, ties to the lowest index) or
/// plausible/implausible per row (pairwise, plausible iff logit 1 > logit 0).
std::vector<int> predict(const Tensor& logits, TaskKind task);

}  // namespace advtrain
