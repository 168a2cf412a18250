#include "advtrain/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advtrain {

double gradient_error(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-8) return diff;
    return diff / scale;
}

namespace {

double evaluate(const MultiScalarFn& f, std::span<const Tensor> points) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(points.size());
    for (const Tensor& p : points) vars.push_back(tape.constant(p));
    Var out = f(tape, vars);
    if (!out.value().is_scalar()) {
        throw std::invalid_argument("grad_check: function must be scalar-valued, got shape " +
                                    shape_string(out.value().shape()));
    }
    return out.value().item();
}

}  // namespace

GradCheckReport grad_check(const MultiScalarFn& f, std::span<const Tensor> points, double h, double tol) {
    if (!(h > 0.0)) throw std::invalid_argument("grad_check: step h must be positive");
    for (const Tensor& p : points) {
        if (!p.all_finite()) throw std::invalid_argument("grad_check: point has non-finite entries");
    }

    GradCheckReport report;
    {
        Tape tape;
        std::vector<Var> vars;
        for (const Tensor& p : points) vars.push_back(tape.parameter(p));
        Var out = f(tape, vars);
        if (!out.value().is_scalar()) {
            throw std::invalid_argument("grad_check: function must be scalar-valued, got shape " +
                                        shape_string(out.value().shape()));
        }
        tape.backward(out);
        for (Var v : vars) {
            Tensor g = tape.grad(v);
            report.analytic.insert(report.analytic.end(), g.data().begin(), g.data().end());
        }
    }

    std::vector<Tensor> probe(points.begin(), points.end());
    for (std::size_t t = 0; t < probe.size(); ++t) {
        for (std::size_t i = 0; i < probe[t].size(); ++i) {
            const double x0 = probe[t][i];
            probe[t][i] = x0 + h;
            const double up = evaluate(f, probe);
            probe[t][i] = x0 - h;
            const double down = evaluate(f, probe);
            probe[t][i] = x0;
            report.numeric.push_back((up - down) / (2.0 * h));
        }
    }

    report.errors.resize(report.analytic.size());
    for (std::size_t i = 0; i < report.analytic.size(); ++i) {
        report.errors[i] = gradient_error(report.analytic[i], report.numeric[i]);
        if (report.errors[i] > report.max_error || std::isnan(report.errors[i])) {
            report.max_error = report.errors[i];
            report.worst_index = i;
        }
    }
    report.passed = report.max_error <= tol;
    return report;
}

GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, double h, double tol) {
    MultiScalarFn wrapped = [&f](Tape& tape, std::span<const Var> vars) { return f(tape, vars[0]); };
    return grad_check(wrapped, std::span<const Tensor>(&point, 1), h, tol);
}

}  // namespace advtrain
