#include "advtrain/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace advtrain {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace {

void check_dims(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw std::invalid_argument("tensor shape " + shape_string(shape) + " has a zero dimension");
    }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument("tensor shape " + shape_string(shape_) + " needs " +
                                    std::to_string(shape_numel(shape_)) + " values, got " +
                                    std::to_string(data_.size()));
    }
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::invalid_argument("item() on non-scalar tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

}  // namespace advtrain
