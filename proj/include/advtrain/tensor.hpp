#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace advtrain {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape. The empty shape is a scalar.
std::size_t shape_numel(const Shape& shape);

/// Renders a shape as "[2, 3, 4]" for diagnostics.
std::string shape_string(const Shape& shape);

/// Dense row-major array of 64-bit reals.
///
/// Tensor is a plain value. Gradient bookkeeping lives on the Tape, which
/// owns one Tensor per recorded node.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Value of a one-element tensor.
    double item() const;

    /// Same data viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    double max_abs() const noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Bitwise comparison of two tensors (distinguishes -0.0 from +0.0 and
/// treats identical NaN payloads as equal).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace advtrain
