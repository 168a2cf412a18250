#include "advtrain/tape.hpp"

#include <stdexcept>

namespace advtrain {

const Tensor& Var::value() const {
    if (tape == nullptr) throw std::logic_error("Var is not bound to a tape");
    return tape->value(*this);
}

void Tape::check_owned(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
        throw std::invalid_argument("Var does not belong to this tape");
    }
}

Var Tape::constant(Tensor value) {
    Node node;
    node.value = std::move(value);
    node.is_leaf = true;
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
    Node node;
    node.value = std::move(value);
    node.is_leaf = true;
    node.requires_grad = true;
    node.grad.assign(node.value.size(), 0.0);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        check_owned(in);
        node.inputs.push_back(in.id);
        node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
    }
    if (node.requires_grad) {
        if (!backward) throw std::logic_error("op with differentiable inputs recorded without a backward rule");
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
    check_owned(v);
    return nodes_[v.id].value;
}

bool Tape::requires_grad(Var v) const {
    check_owned(v);
    return nodes_[v.id].requires_grad;
}

Tensor Tape::grad(Var leaf) const {
    check_owned(leaf);
    const Node& node = nodes_[leaf.id];
    if (!node.is_leaf || !node.requires_grad) {
        throw std::invalid_argument("grad() is only tracked for parameter leaves");
    }
    return Tensor(node.value.shape(), node.grad);
}

void Tape::backward(Var loss) {
    check_owned(loss);
    if (!nodes_[loss.id].value.is_scalar()) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " +
                                    shape_string(nodes_[loss.id].value.shape()));
    }
    if (!nodes_[loss.id].requires_grad) return;

    // Adjoints of interior nodes live only for this pass; leaves accumulate.
    std::vector<std::vector<double>> adjoint(loss.id + 1);
    adjoint[loss.id].assign(1, 1.0);

    std::vector<const Tensor*> input_values;
    std::vector<std::span<double>> input_grads;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || adjoint[i].empty()) continue;
        if (node.is_leaf) {
            for (std::size_t k = 0; k < node.grad.size(); ++k) node.grad[k] += adjoint[i][k];
        } else {
            input_values.clear();
            input_grads.clear();
            for (std::size_t in : node.inputs) {
                input_values.push_back(&nodes_[in].value);
                if (nodes_[in].requires_grad) {
                    if (adjoint[in].empty()) adjoint[in].assign(nodes_[in].value.size(), 0.0);
                    input_grads.emplace_back(adjoint[in]);
                } else {
                    input_grads.emplace_back();
                }
            }
            node.backward(BackwardArgs{input_values, node.value, adjoint[i], input_grads});
        }
        adjoint[i].clear();
        adjoint[i].shrink_to_fit();
    }
}

void Tape::zero_grad() {
    for (Node& node : nodes_) {
        if (node.is_leaf && node.requires_grad) std::fill(node.grad.begin(), node.grad.end(), 0.0);
    }
}

}  // namespace advtrain
