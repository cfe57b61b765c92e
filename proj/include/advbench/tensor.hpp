#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace advbench {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank-0 tensors (empty shape) hold one
// element. Construction rejects non-finite data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor filled(Shape shape, double value);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    // Value of a one-element tensor.
    double item() const;

    Tensor reshaped(Shape shape) const;

    // Slice [begin, end) along the leading axis.
    Tensor rows(std::size_t begin, std::size_t end) const;
    // Single entry along the leading axis, with the leading axis dropped.
    Tensor row(std::size_t index) const;

    bool all_finite() const noexcept;

    // Element-wise comparison; -0.0 == 0.0.
    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_{0};
    std::vector<double> data_;
};

// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

// Tensor with a leading batch axis of 1.
Tensor batch_of_one(const Tensor& example);

// Named tensors (model parameters, optimizer moments, gradients).
using TensorMap = std::map<std::string, Tensor, std::less<>>;

}  // namespace advbench
