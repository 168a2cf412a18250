#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "advtrain/tape.hpp"
#include "advtrain/tensor.hpp"

namespace advtrain {

struct GradCheckReport {
    std::vector<double> analytic;  // flattened across all points
    std::vector<double> numeric;
    std::vector<double> errors;
    double max_error = 0.0;
    std::size_t worst_index = 0;
    bool passed = true;
};

/// Scalar function of several tensors, built on the given tape.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Compares backward() against central differences with step h.
///
/// Per coordinate the error is |a - n| / max(|a|, |n|), or |a - n| when both
/// magnitudes are below 1e-8. Passes iff the largest error is <= tol.
/// The function is re-evaluated on a fresh tape for every probe, so it must be
/// deterministic (seed any dropout generator inside `f`).
GradCheckReport grad_check(const MultiScalarFn& f, std::span<const Tensor> points, double h = 1e-5,
                           double tol = 1e-4);
GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, double h = 1e-5, double tol = 1e-4);

/// The error measure used by grad_check.
double gradient_error(double analytic, double numeric);

}  // namespace advtrain
