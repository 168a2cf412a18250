#include "advtrain/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace advtrain {

double lr_at(std::size_t step, std::size_t total_steps, double base_lr, double warmup_ratio) {
    if (total_steps == 0) throw std::invalid_argument("lr_at: total_steps must be positive");
    if (step > total_steps) {
        throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond total " + std::to_string(total_steps));
    }
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw std::invalid_argument("warmup_ratio must be in [0, 1]");
    const double s = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warmup = warmup_ratio * total;
    if (s < warmup) return base_lr * s / warmup;
    if (warmup >= total) return base_lr;
    return base_lr * (total - s) / (total - warmup);
}

double global_norm(std::span<const Tensor> grads) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (double v : g.data()) sq += v * v;
    return std::sqrt(sq);
}

double clip_gradients(std::span<Tensor> grads, double clip_norm) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
    const double norm = global_norm(grads);
    if (norm > clip_norm) {
        const double factor = clip_norm / norm;
        for (Tensor& g : grads)
            for (double& v : g.data()) v *= factor;
    }
    return norm;
}

AdamState AdamState::for_params(std::span<const Tensor* const> params) {
    AdamState state;
    for (const Tensor* p : params) {
        state.first_moment.emplace_back(p->shape());
        state.second_moment.emplace_back(p->shape());
    }
    return state;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamOptions& options) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape()) {
            throw std::invalid_argument("adam_step: shape mismatch " + shape_string(params[i]->shape()) + " vs " +
                                        shape_string(grads[i].shape()));
        }
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        const Tensor& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = options.beta1 * m[k] + (1.0 - options.beta1) * g[k];
            v[k] = options.beta2 * v[k] + (1.0 - options.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            p[k] -= lr * m_hat / (std::sqrt(v_hat) + options.epsilon);
        }
    }
}

}  // namespace advtrain
