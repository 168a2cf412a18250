#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "advtrain/tensor.hpp"

namespace advtrain {

/// Linear warmup from 0 to base_lr over the first warmup_ratio * total_steps
/// steps, then linear decay to 0 at total_steps. Requires
/// 0 <= step <= total_steps and total_steps > 0.
double lr_at(std::size_t step, std::size_t total_steps, double base_lr, double warmup_ratio);

double global_norm(std::span<const Tensor> grads);

/// Rescales all gradients by clip_norm / norm when the global l2 norm exceeds
/// clip_norm. Returns the norm before clipping.
double clip_gradients(std::span<Tensor> grads, double clip_norm);

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-6;
};

struct AdamState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::int64_t step_count = 0;

    /// Zero moments shaped like `params`.
    static AdamState for_params(std::span<const Tensor* const> params);
};

/// One bias-corrected Adam update in place.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options = {});

}  // namespace advtrain
