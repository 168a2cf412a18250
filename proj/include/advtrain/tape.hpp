#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "advtrain/tensor.hpp"

namespace advtrain {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    /// Valid until the next node is recorded on the tape.
    const Tensor& value() const;
    Shape shape() const { return value().shape(); }
};

/// What a backward rule sees: input values, the output value, the adjoint of
/// the output, and one accumulation buffer per input. Buffers for inputs that
/// do not need a gradient are empty spans.
struct BackwardArgs {
    std::span<const Tensor* const> inputs;
    const Tensor& output;
    std::span<const double> grad_output;
    std::span<const std::span<double>> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Append-only record of a computation. Nodes are stored in creation order,
/// which is a topological order since inputs must exist before an op uses
/// them. Leaves created with parameter() accumulate gradients across
/// backward() calls until zero_grad().
///
/// A Tape is single-threaded and must outlive every Var that refers to it.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Records an op. `backward` may be empty when no input requires a gradient.
    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    bool requires_grad(Var v) const;

    /// Accumulated gradient of a parameter leaf (zeros if never reached).
    Tensor grad(Var leaf) const;

    void backward(Var loss);
    void zero_grad();

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool is_leaf = false;
        std::vector<double> grad;  // leaves only
    };

    void check_owned(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace advtrain
