#include "advbench/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advbench/error.hpp"

namespace advbench {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " elements, got " +
                         std::to_string(data_.size()));
    }
    if (!all_finite()) throw OverflowError("tensor constructed from non-finite data");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::filled(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    if (!std::isfinite(value)) throw OverflowError("tensor filled with non-finite value");
    return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    }
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw ShapeError("row range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(shape_));
    }
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Tensor t;
    t.shape_ = shape_;
    t.shape_[0] = end - begin;
    t.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                   data_.begin() + static_cast<std::ptrdiff_t>(end * stride));
    return t;
}

Tensor Tensor::row(std::size_t index) const {
    Tensor t = rows(index, index + 1);
    t.shape_.erase(t.shape_.begin());
    return t;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("cannot stack an empty list without a shape");
    const Shape& inner = items.front().shape();
    Shape shape{items.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> data;
    data.reserve(shape_size(shape));
    for (const auto& t : items) {
        if (t.shape() != inner) {
            throw ShapeError("stack: shape " + shape_string(t.shape()) + " differs from " +
                             shape_string(inner));
        }
        data.insert(data.end(), t.data().begin(), t.data().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor batch_of_one(const Tensor& example) {
    Shape shape{1};
    shape.insert(shape.end(), example.shape().begin(), example.shape().end());
    return example.reshaped(std::move(shape));
}

}  // namespace advbench
