#pragma once

#include <cstddef>
#include <span>

#include "advtrain/rng.hpp"
#include "advtrain/tape.hpp"
#include "advtrain/tensor.hpp"

// Differentiable ops over Vars. Every op checks shapes and throws
// std::invalid_argument naming the offending shapes. Broadcasting is limited
// to scalar scaling and row-wise bias addition.
namespace advtrain::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);

/// [R x C] + [C], the bias added to every row.
Var add_bias(Var a, Var bias);

/// [M x K] x [K x N].
Var matmul(Var a, Var b);

/// Rows of `table` ([V x D]) selected by `ids`; result shape is `prefix + [D]`
/// where product(prefix) == ids.size(). Out-of-range ids throw std::out_of_range.
Var gather_rows(Var table, std::span<const int> ids, const Shape& prefix);

Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
/// Throws for any non-positive input. Use log_softmax for log-probabilities.
Var log(Var a);

/// Softmax over the last axis, max-subtracted.
Var softmax(Var a);
/// Log-softmax over the last axis, max-subtracted.
Var log_softmax(Var a);

Var sum(Var a);
Var mean(Var a);

Var reshape(Var a, const Shape& shape);

/// Multiplies by a fixed mask, which is saved for the backward pass.
Var apply_mask(Var a, Tensor mask);

/// Inverted dropout: keeps each element with probability 1 - rate and scales
/// survivors by 1 / (1 - rate). Identity (and no draws) when rate == 0.
Var dropout(Var a, double rate, Rng& rng);

/// Mean over the sequence axis of x ([S x T x D]) restricted to positions
/// where mask ([S x T], entries 0 or 1) is 1. Masked positions are skipped,
/// so their values never reach the output. Rows with no live position pool to 0.
Var masked_mean_pool(Var x, const Tensor& mask);

/// out[r] = a[r, index[r]] for a of shape [R x C].
Var pick(Var a, std::span<const int> index);

/// Per-row KL( softmax(logits) || exp(reference_log_probs) ), shape [R].
/// The reference is a constant. The gradient is exactly zero wherever the
/// row's log-softmax equals the reference bitwise.
Var kl_to_reference(Var logits, const Tensor& reference_log_probs);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator*(Var a, double s) { return scale(a, s); }

/// Value-level log-softmax over the last axis (no tape).
Tensor log_softmax_values(const Tensor& logits);

}  // namespace advtrain::ops
