#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advbench/tensor.hpp"

namespace advbench {

enum class OpKind {
    Input,
    Parameter,
    Add,
    Subtract,
    Multiply,
    MatMul,
    Conv2d,
    Relu,
    Tanh,
    Reshape,
    Sum,
    Mean,
    MaxAxis,
    Softmax,
    SoftmaxCrossEntropy,
    Clip,
};

std::string_view op_name(OpKind kind);

struct NodeId {
    std::size_t index = 0;
};

struct Node {
    OpKind kind = OpKind::Input;
    std::vector<std::size_t> inputs;
    std::string name;   // leaves only
    Shape target;       // Reshape; a 0 entry copies the input's dimension
    std::size_t axis = 0;  // MaxAxis
    double lower = 0.0;    // Clip
    double upper = 0.0;    // Clip
};

// Append-only expression DAG. Nodes reference earlier nodes only, so node
// order is a topological order. Graphs are plain values: copying one and
// appending nodes yields an independent extension.
//
// Shape rules:
//   add/subtract/multiply  b.shape == a.shape, or b.shape is a suffix of
//                          a.shape (broadcast over leading axes)
//   matmul                 (m,k) x (k,n) -> (m,n)
//   conv2d                 x (n,c,h,w), kernel (o,c,kh,kw), bias (o)
//                          -> (n,o,h-kh+1,w-kw+1); valid padding, stride 1
//   sum/mean               any -> scalar
//   max_axis               removes `axis`
//   softmax                (n,k) row-wise
//   softmax_cross_entropy  logits (n,k), targets (n,k) -> per-row loss (n)
class Graph {
public:
    NodeId input(std::string name);
    NodeId parameter(std::string name);

    NodeId add(NodeId a, NodeId b);
    NodeId subtract(NodeId a, NodeId b);
    NodeId multiply(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId conv2d(NodeId x, NodeId kernel, NodeId bias);
    NodeId relu(NodeId x);
    NodeId tanh(NodeId x);
    NodeId reshape(NodeId x, Shape target);
    // (n, ...) -> (n, prod(...))
    NodeId flatten(NodeId x);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId max_axis(NodeId x, std::size_t axis);
    NodeId softmax(NodeId logits);
    NodeId softmax_cross_entropy(NodeId logits, NodeId targets);
    NodeId clip(NodeId x, double lower, double upper);

    void set_output(NodeId node);
    NodeId output() const;

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Node index of the named leaf; throws ValidationError if absent.
    std::size_t leaf(std::string_view name) const;
    bool has_leaf(std::string_view name) const;
    std::vector<std::string> leaf_names(OpKind kind) const;

private:
    NodeId push(Node node);
    void check(NodeId id) const;

    std::vector<Node> nodes_;
    std::size_t output_ = 0;
    bool has_output_ = false;
};

// Non-owning name -> tensor view used to feed leaves. The bound tensors must
// outlive every evaluation that uses the bindings.
class Bindings {
public:
    Bindings() = default;

    Bindings& bind(std::string name, const Tensor& value);
    Bindings& bind_all(const TensorMap& values);
    const Tensor* find(std::string_view name) const;

private:
    std::map<std::string, const Tensor*, std::less<>> values_;
};

// Shapes of every node; throws ShapeError naming the first offending node.
std::vector<Shape> infer_shapes(const Graph& graph, const Bindings& bindings);

// Value of the output node. Throws OverflowError if any node produces a
// non-finite value.
Tensor evaluate(const Graph& graph, const Bindings& bindings);

// Output value plus gradients of a scalar output with respect to leaves.
struct BackwardResult {
    double value = 0.0;
    TensorMap gradients;
};

BackwardResult backward(const Graph& graph, const Bindings& bindings,
                        std::span<const std::string> wrt);

// d(output)/d(leaf) for a scalar output.
Tensor gradient(const Graph& graph, const Bindings& bindings, std::string_view wrt);

}  // namespace advbench
