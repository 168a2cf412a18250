#include "advtrain/model.hpp"

#include <cmath>
#include <stdexcept>

namespace advtrain {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::RelevanceRanking: return "ranking";
        case TaskKind::PairwiseClassification: return "pairwise";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
    if (name == "ranking") return TaskKind::RelevanceRanking;
    if (name == "pairwise") return TaskKind::PairwiseClassification;
    throw std::invalid_argument("unknown task kind '" + std::string(name) + "' (expected ranking or pairwise)");
}

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::size_t ModelParams::output_dim() const {
    return encoder.empty() ? embedding_dim() : encoder.back().weight.dim(1);
}

void ModelParams::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model parameters: " + what); };
    if (embedding.rank() != 2) fail("embedding must be [vocab x d_emb], got " + shape_string(embedding.shape()));
    std::size_t width = embedding_dim();
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        const DenseLayer& layer = encoder[i];
        if (layer.weight.rank() != 2 || layer.weight.dim(0) != width) {
            fail("encoder layer " + std::to_string(i) + " weight " + shape_string(layer.weight.shape()) +
                 " does not take width " + std::to_string(width));
        }
        width = layer.weight.dim(1);
        if (layer.bias.shape() != Shape{width}) {
            fail("encoder layer " + std::to_string(i) + " bias " + shape_string(layer.bias.shape()));
        }
    }
    if (head_rank.shape() != Shape{width, 1}) fail("head_rank " + shape_string(head_rank.shape()));
    if (head_pair_weight.shape() != Shape{width, 2}) fail("head_pair_weight " + shape_string(head_pair_weight.shape()));
    if (head_pair_bias.shape() != Shape{2}) fail("head_pair_bias " + shape_string(head_pair_bias.shape()));
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must be in [0, 1)");
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out{&embedding};
    for (DenseLayer& layer : encoder) {
        out.push_back(&layer.weight);
        out.push_back(&layer.bias);
    }
    out.push_back(&head_rank);
    out.push_back(&head_pair_weight);
    out.push_back(&head_pair_bias);
    return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
    auto mutable_view = const_cast<ModelParams*>(this)->tensors();
    return {mutable_view.begin(), mutable_view.end()};
}

std::vector<std::string> ModelParams::tensor_names() const {
    std::vector<std::string> out{"embedding"};
    for (std::size_t i = 0; i < encoder.size(); ++i) {
        out.push_back("encoder." + std::to_string(i) + ".weight");
        out.push_back("encoder." + std::to_string(i) + ".bias");
    }
    out.push_back("head_rank.weight");
    out.push_back("head_pair.weight");
    out.push_back("head_pair.bias");
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    if (ta.size() != tb.size() || a.dropout_rate != b.dropout_rate) return false;
    for (std::size_t i = 0; i < a.encoder.size(); ++i) {
        if (a.encoder[i].activation != b.encoder[i].activation) return false;
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!bitwise_equal(*ta[i], *tb[i])) return false;
    }
    return true;
}

namespace {

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({in, out});
    for (double& v : w.data()) v = rng.uniform(-limit, limit);
    return w;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
    if (config.vocab_size == 0 || config.embedding_dim == 0) throw std::invalid_argument("model sizes must be positive");
    ModelParams p;
    p.embedding = Tensor({config.vocab_size, config.embedding_dim});
    for (double& v : p.embedding.data()) v = config.embedding_init_scale * rng.normal();
    std::size_t width = config.embedding_dim;
    for (std::size_t h : config.hidden) {
        if (h == 0) throw std::invalid_argument("hidden sizes must be positive");
        p.encoder.push_back(DenseLayer{glorot(width, h, rng), Tensor({h}), config.activation});
        width = h;
    }
    p.head_rank = glorot(width, 1, rng);
    p.head_pair_weight = glorot(width, 2, rng);
    p.head_pair_bias = Tensor({2});
    p.dropout_rate = config.dropout_rate;
    p.validate();
    return p;
}

Shape TokenBatch::token_shape() const {
    if (task == TaskKind::RelevanceRanking) return {batch, options, seq_len};
    return {batch, seq_len};
}

Shape TokenBatch::embedding_shape(std::size_t embedding_dim) const {
    Shape s = token_shape();
    s.push_back(embedding_dim);
    return s;
}

Shape TokenBatch::logits_shape() const {
    if (task == TaskKind::RelevanceRanking) return {batch, options};
    return {batch, 2};
}

void TokenBatch::validate(std::size_t vocab_size) const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("invalid token batch: " + what); };
    if (batch == 0 || seq_len == 0 || options == 0) fail("empty dimensions");
    if (task == TaskKind::PairwiseClassification && options != 1) fail("pairwise batches have one sequence per row");
    const std::size_t n = batch * options * seq_len;
    if (tokens.size() != n) fail("expected " + std::to_string(n) + " tokens, got " + std::to_string(tokens.size()));
    if (pad_mask.size() != n) fail("pad_mask length does not match tokens");
    for (int t : tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
            throw std::out_of_range("token id " + std::to_string(t) + " out of range for vocabulary of " +
                                    std::to_string(vocab_size));
        }
    }
    if (!labels.empty()) {
        if (labels.size() != batch) fail("expected one label per example");
        for (int y : labels) {
            if (task == TaskKind::RelevanceRanking && (y < 0 || static_cast<std::size_t>(y) >= options))
                fail("ranking label " + std::to_string(y) + " out of range");
            if (task == TaskKind::PairwiseClassification && y != 0 && y != 1)
                fail("pairwise label " + std::to_string(y) + " is not 0/1");
        }
    }
    if (task == TaskKind::PairwiseClassification) {
        if (group_ids.size() != batch) fail("pairwise batches need one group id per row");
    } else if (!group_ids.empty()) {
        fail("group ids are only meaningful for pairwise batches");
    }
}

std::vector<Var> BoundParams::vars() const {
    std::vector<Var> out{embedding};
    for (const auto& [w, b] : encoder) {
        out.push_back(w);
        out.push_back(b);
    }
    out.push_back(head_rank);
    out.push_back(head_pair_weight);
    out.push_back(head_pair_bias);
    return out;
}

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable) {
    params.validate();
    auto place = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
    BoundParams b;
    b.embedding = place(params.embedding);
    for (const DenseLayer& layer : params.encoder) {
        b.encoder.emplace_back(place(layer.weight), place(layer.bias));
        b.activations.push_back(layer.activation);
    }
    b.head_rank = place(params.head_rank);
    b.head_pair_weight = place(params.head_pair_weight);
    b.head_pair_bias = place(params.head_pair_bias);
    b.dropout_rate = params.dropout_rate;
    return b;
}

std::vector<Tensor> gradients(const Tape& tape, const BoundParams& bound) {
    std::vector<Tensor> out;
    for (Var v : bound.vars()) out.push_back(tape.grad(v));
    return out;
}

namespace {

Tensor mask_tensor(const TokenBatch& batch) {
    Tensor m({batch.sequences(), batch.seq_len});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = batch.pad_mask[i] ? 1.0 : 0.0;
    return m;
}

}  // namespace

EmbeddedBatch embed(const ModelParams& params, const TokenBatch& batch) {
    Tape tape;
    BoundParams b = bind(tape, params, false);
    return EmbeddedBatch{embed(b, batch).value(), &batch};
}

Var embed(const BoundParams& params, const TokenBatch& batch) {
    const Tensor& table = params.embedding.value();
    batch.validate(table.dim(0));
    return ops::gather_rows(params.embedding, batch.tokens, batch.token_shape());
}

Var forward_from_embeddings(const BoundParams& params, const TokenBatch& batch, Var embeddings,
                            std::optional<Var> delta, const ForwardOptions& options) {
    const std::size_t d = params.embedding.value().dim(1);
    const Shape expected = batch.embedding_shape(d);
    if (embeddings.shape() != expected) {
        throw std::invalid_argument("embeddings " + shape_string(embeddings.shape()) + " do not match batch shape " +
                                    shape_string(expected));
    }
    const bool dropping = options.train && params.dropout_rate > 0.0;
    if (dropping && options.dropout_rng == nullptr) {
        throw std::invalid_argument("train-mode forward with dropout needs a generator");
    }

    Var x = embeddings;
    if (delta) {
        if (delta->shape() != expected) {
            throw std::invalid_argument("perturbation " + shape_string(delta->shape()) +
                                        " does not match embeddings " + shape_string(expected));
        }
        x = ops::add(x, *delta);
    }
    x = ops::reshape(x, {batch.sequences(), batch.seq_len, d});
    Var h = ops::masked_mean_pool(x, mask_tensor(batch));
    if (dropping) h = ops::dropout(h, params.dropout_rate, *options.dropout_rng);

    for (std::size_t i = 0; i < params.encoder.size(); ++i) {
        const auto& [w, b] = params.encoder[i];
        h = ops::add_bias(ops::matmul(h, w), b);
        h = params.activations[i] == Activation::Relu ? ops::relu(h) : ops::tanh(h);
        if (dropping && i + 1 < params.encoder.size()) h = ops::dropout(h, params.dropout_rate, *options.dropout_rng);
    }

    if (batch.task == TaskKind::RelevanceRanking) {
        return ops::reshape(ops::matmul(h, params.head_rank), {batch.batch, batch.options});
    }
    return ops::add_bias(ops::matmul(h, params.head_pair_weight), params.head_pair_bias);
}

Var forward(const BoundParams& params, const TokenBatch& batch, const ForwardOptions& options) {
    return forward_from_embeddings(params, batch, embed(params, batch), std::nullopt, options);
}

Tensor forward(const ModelParams& params, const TokenBatch& batch, const ForwardOptions& options) {
    Tape tape;
    BoundParams b = bind(tape, params, false);
    return forward(b, batch, options).value();
}

Tensor forward_from_embeddings(const ModelParams& params, const EmbeddedBatch& emb, const Tensor* delta,
                               const ForwardOptions& options) {
    if (emb.source == nullptr) throw std::invalid_argument("embedded batch has no source tokens");
    Tape tape;
    BoundParams b = bind(tape, params, false);
    std::optional<Var> d;
    if (delta != nullptr) d = tape.constant(*delta);
    return forward_from_embeddings(b, *emb.source, tape.constant(emb.embeddings), d, options).value();
}

std::vector<int> predict(const Tensor& logits, TaskKind task) {
    if (logits.rank() != 2) throw std::invalid_argument("predict expects [rows x cols] logits");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    std::vector<int> out(rows);
    if (task == TaskKind::PairwiseClassification) {
        if (cols != 2) throw std::invalid_argument("pairwise logits must have 2 columns");
        for (std::size_t r = 0; r < rows; ++r) out[r] = logits[r * 2 + 1] > logits[r * 2] ? 1 : 0;
        return out;
    }
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cols; ++c)
            if (logits[r * cols + c] > logits[r * cols + best]) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

}  // namespace advtrain
