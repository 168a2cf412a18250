#include "advtrain/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace advtrain::ops {

namespace {

Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw std::invalid_argument("op on an unbound Var");
    return *a.tape;
}

Tape& tape_of(Var a, Var b) {
    if (a.tape != b.tape) throw std::invalid_argument("op inputs live on different tapes");
    return tape_of(a);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                                    shape_string(a.shape()));
    }
}

// Rows over the last axis: (row count, row length).
std::pair<std::size_t, std::size_t> rows_of(const char* op, const Tensor& a) {
    if (a.rank() == 0) throw std::invalid_argument(std::string(op) + ": needs at least rank 1, got a scalar");
    const std::size_t cols = a.shape().back();
    return {a.size() / cols, cols};
}

Tensor log_softmax_rows(const Tensor& a) {
    auto [rows, cols] = rows_of("log_softmax", a);
    Tensor out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = a.data().data() + r * cols;
        double* o = out.data().data() + r * cols;
        double m = in[0];
        for (std::size_t c = 1; c < cols; ++c) m = std::max(m, in[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - m);
        const double log_s = std::log(s);
        for (std::size_t c = 0; c < cols; ++c) o[c] = (in[c] - m) - log_s;
    }
    return out;
}

}  // namespace

Tensor log_softmax_values(const Tensor& logits) { return log_softmax_rows(logits); }

Var add(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_same_shape("add", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
        for (const auto& g : args.grad_inputs) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.grad_output[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_same_shape("sub", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
    return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
        const auto& ga = args.grad_inputs[0];
        const auto& gb = args.grad_inputs[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += args.grad_output[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= args.grad_output[i];
    });
}

Var mul(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_same_shape("mul", x, y);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
    return tape.record(std::move(out), {a, b}, [](const BackwardArgs& args) {
        const Tensor& x = *args.inputs[0];
        const Tensor& y = *args.inputs[1];
        const auto& ga = args.grad_inputs[0];
        const auto& gb = args.grad_inputs[1];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += args.grad_output[i] * y[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += args.grad_output[i] * x[i];
    });
}

Var scale(Var a, double s) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v *= s;
    return tape.record(std::move(out), {a}, [s](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * args.grad_output[i];
    });
}

Var add_bias(Var a, Var bias) {
    Tape& tape = tape_of(a, bias);
    const Tensor& x = a.value();
    const Tensor& b = bias.value();
    require_rank("add_bias", x, 2);
    require_rank("add_bias", b, 1);
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (b.dim(0) != cols) shape_error("add_bias", x.shape(), b.shape());
    Tensor out = x;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b[c];
    return tape.record(std::move(out), {a, bias}, [rows, cols](const BackwardArgs& args) {
        const auto& gx = args.grad_inputs[0];
        const auto& gb = args.grad_inputs[1];
        const auto& go = args.grad_output;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
        if (!gb.empty()) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gb[c] += go[r * cols + c];
        }
    });
}

Var matmul(Var a, Var b) {
    Tape& tape = tape_of(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    require_rank("matmul", x, 2);
    require_rank("matmul", y, 2);
    const std::size_t m = x.dim(0), k = x.dim(1), n = y.dim(1);
    if (y.dim(0) != k) shape_error("matmul", x.shape(), y.shape());
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out.data().data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            const double* yr = y.data().data() + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += xv * yr[j];
        }
    }
    return tape.record(std::move(out), {a, b}, [m, k, n](const BackwardArgs& args) {
        const Tensor& x = *args.inputs[0];
        const Tensor& y = *args.inputs[1];
        const auto& go = args.grad_output;
        const auto& gx = args.grad_inputs[0];
        const auto& gy = args.grad_inputs[1];
        if (!gx.empty()) {
            // gx = go * y^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * y[p * n + j];
                    gx[i * k + p] += s;
                }
        }
        if (!gy.empty()) {
            // gy = x^T * go
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xv = x[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gy[p * n + j] += xv * go[i * n + j];
                }
        }
    });
}

Var gather_rows(Var table, std::span<const int> ids, const Shape& prefix) {
    Tape& tape = tape_of(table);
    const Tensor& t = table.value();
    require_rank("gather_rows", t, 2);
    if (shape_numel(prefix) != ids.size()) {
        throw std::invalid_argument("gather_rows: prefix " + shape_string(prefix) + " does not match " +
                                    std::to_string(ids.size()) + " ids");
    }
    const std::size_t vocab = t.dim(0), d = t.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::out_of_range("token id " + std::to_string(id) + " out of range for vocabulary of " +
                                    std::to_string(vocab));
        }
    }
    Shape shape = prefix;
    shape.push_back(d);
    Tensor out(shape);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    std::vector<int> saved(ids.begin(), ids.end());
    return tape.record(std::move(out), {table}, [saved = std::move(saved), d](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < saved.size(); ++i) {
            const std::size_t row = static_cast<std::size_t>(saved[i]) * d;
            for (std::size_t c = 0; c < d; ++c) g[row + c] += args.grad_output[i * d + c];
        }
    });
}

Var relu(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return tape.record(std::move(out), {a}, [](const BackwardArgs& args) {
        const Tensor& x = *args.inputs[0];
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) g[i] += args.grad_output[i];
    });
}

Var tanh(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = std::tanh(v);
    return tape.record(std::move(out), {a}, [](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = args.output[i];
            g[i] += args.grad_output[i] * (1.0 - y * y);
        }
    });
}

Var exp(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (double& v : out.data()) v = std::exp(v);
    return tape.record(std::move(out), {a}, [](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.grad_output[i] * args.output[i];
    });
}

Var log(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(out[i] > 0.0)) {
            throw std::domain_error("log of non-positive value " + std::to_string(out[i]) + " at index " +
                                    std::to_string(i) + "; use log_softmax for log-probabilities");
        }
        out[i] = std::log(out[i]);
    }
    return tape.record(std::move(out), {a}, [](const BackwardArgs& args) {
        const Tensor& x = *args.inputs[0];
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.grad_output[i] / x[i];
    });
}

Var softmax(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = log_softmax_rows(a.value());
    for (double& v : out.data()) v = std::exp(v);
    auto [rows, cols] = rows_of("softmax", out);
    return tape.record(std::move(out), {a}, [rows, cols](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += args.grad_output[base + c] * args.output[base + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[base + c] += args.output[base + c] * (args.grad_output[base + c] - dot);
        }
    });
}

Var log_softmax(Var a) {
    Tape& tape = tape_of(a);
    Tensor out = log_softmax_rows(a.value());
    auto [rows, cols] = rows_of("log_softmax", out);
    return tape.record(std::move(out), {a}, [rows, cols](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t base = r * cols;
            double total = 0.0;
            for (std::size_t c = 0; c < cols; ++c) total += args.grad_output[base + c];
            for (std::size_t c = 0; c < cols; ++c)
                g[base + c] += args.grad_output[base + c] - std::exp(args.output[base + c]) * total;
        }
    });
}

Var sum(Var a) {
    Tape& tape = tape_of(a);
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return tape.record(Tensor::scalar(s), {a}, [](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (double& v : g) v += args.grad_output[0];
    });
}

Var mean(Var a) {
    Tape& tape = tape_of(a);
    const double n = static_cast<double>(a.value().size());
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return tape.record(Tensor::scalar(s / n), {a}, [n](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        const double share = args.grad_output[0] / n;
        for (double& v : g) v += share;
    });
}

Var reshape(Var a, const Shape& shape) {
    Tape& tape = tape_of(a);
    Tensor out = a.value().reshaped(shape);
    return tape.record(std::move(out), {a}, [](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.grad_output[i];
    });
}

Var apply_mask(Var a, Tensor mask) {
    Tape& tape = tape_of(a);
    require_same_shape("apply_mask", a.value(), mask);
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return tape.record(std::move(out), {a}, [mask = std::move(mask)](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += args.grad_output[i] * mask[i];
    });
}

Var dropout(Var a, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
    if (rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(a.value().shape());
    for (double& m : mask.data()) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    return apply_mask(a, std::move(mask));
}

Var masked_mean_pool(Var x, const Tensor& mask) {
    Tape& tape = tape_of(x);
    const Tensor& v = x.value();
    require_rank("masked_mean_pool", v, 3);
    require_rank("masked_mean_pool", mask, 2);
    const std::size_t s = v.dim(0), t = v.dim(1), d = v.dim(2);
    if (mask.dim(0) != s || mask.dim(1) != t) shape_error("masked_mean_pool", v.shape(), mask.shape());
    std::vector<double> inv_count(s, 0.0);
    for (std::size_t i = 0; i < s; ++i) {
        double c = 0.0;
        for (std::size_t p = 0; p < t; ++p) {
            const double m = mask[i * t + p];
            if (m != 0.0 && m != 1.0) throw std::invalid_argument("masked_mean_pool: mask entries must be 0 or 1");
            c += m;
        }
        inv_count[i] = c > 0.0 ? 1.0 / c : 0.0;
    }
    Tensor out({s, d});
    for (std::size_t i = 0; i < s; ++i) {
        double* o = out.data().data() + i * d;
        for (std::size_t p = 0; p < t; ++p) {
            if (mask[i * t + p] == 0.0) continue;
            const double* row = v.data().data() + (i * t + p) * d;
            for (std::size_t c = 0; c < d; ++c) o[c] += row[c];
        }
        for (std::size_t c = 0; c < d; ++c) o[c] *= inv_count[i];
    }
    std::vector<std::uint8_t> live(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) live[i] = mask[i] != 0.0;
    return tape.record(std::move(out), {x},
                       [s, t, d, live = std::move(live), inv_count = std::move(inv_count)](const BackwardArgs& args) {
                           const auto& g = args.grad_inputs[0];
                           for (std::size_t i = 0; i < s; ++i)
                               for (std::size_t p = 0; p < t; ++p) {
                                   if (!live[i * t + p]) continue;
                                   for (std::size_t c = 0; c < d; ++c)
                                       g[(i * t + p) * d + c] += args.grad_output[i * d + c] * inv_count[i];
                               }
                       });
}

Var pick(Var a, std::span<const int> index) {
    Tape& tape = tape_of(a);
    const Tensor& v = a.value();
    require_rank("pick", v, 2);
    const std::size_t rows = v.dim(0), cols = v.dim(1);
    if (index.size() != rows) {
        throw std::invalid_argument("pick: " + std::to_string(index.size()) + " indices for shape " +
                                    shape_string(v.shape()));
    }
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= cols) {
            throw std::out_of_range("pick: index " + std::to_string(index[r]) + " out of range for " +
                                    std::to_string(cols) + " columns");
        }
        out[r] = v[r * cols + static_cast<std::size_t>(index[r])];
    }
    std::vector<int> saved(index.begin(), index.end());
    return tape.record(std::move(out), {a}, [cols, saved = std::move(saved)](const BackwardArgs& args) {
        const auto& g = args.grad_inputs[0];
        for (std::size_t r = 0; r < saved.size(); ++r)
            g[r * cols + static_cast<std::size_t>(saved[r])] += args.grad_output[r];
    });
}

Var kl_to_reference(Var logits, const Tensor& reference_log_probs) {
    Tape& tape = tape_of(logits);
    require_same_shape("kl_to_reference", logits.value(), reference_log_probs);
    Tensor log_q = log_softmax_rows(logits.value());
    auto [rows, cols] = rows_of("kl_to_reference", log_q);
    Tensor out({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        double kl = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            kl += std::exp(log_q[i]) * (log_q[i] - reference_log_probs[i]);
        }
        out[r] = kl;
    }
    return tape.record(std::move(out), {logits},
                       [rows, cols, log_q = std::move(log_q), ref = reference_log_probs](const BackwardArgs& args) {
                           // d KL / d z_j = q_j * ((log q_j - log p_j) - KL)
                           const auto& g = args.grad_inputs[0];
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double kl = args.output[r];
                               for (std::size_t c = 0; c < cols; ++c) {
                                   const std::size_t i = r * cols + c;
                                   g[i] += args.grad_output[r] * std::exp(log_q[i]) * ((log_q[i] - ref[i]) - kl);
                               }
                           }
                       });
}

}  // namespace advtrain::ops
