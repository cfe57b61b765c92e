#include "advbench/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advbench/error.hpp"

namespace advbench {
namespace {

std::string describe(const Graph& graph, std::size_t index) {
    const Node& node = graph.nodes()[index];
    std::string s = "node " + std::to_string(index) + " (" + std::string(op_name(node.kind));
    if (!node.name.empty()) s += " '" + node.name + "'";
    return s + ")";
}

[[noreturn]] void shape_fail(const Graph& graph, std::size_t index, const std::string& what) {
    throw ShapeError(describe(graph, index) + ": " + what);
}

bool is_suffix(const Shape& whole, const Shape& tail) {
    if (tail.size() > whole.size()) return false;
    return std::equal(tail.rbegin(), tail.rend(), whole.rbegin());
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t length = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.length = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape resolve_reshape(const Shape& in, const Shape& target) {
    Shape out = target;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i] == 0) {
            if (i >= in.size()) throw ShapeError("reshape placeholder beyond input rank");
            out[i] = in[i];
        }
    }
    return out;
}

struct Scratch {
    std::vector<Shape> shapes;
    std::vector<std::vector<double>> values;
};

const Tensor& leaf_value(const Graph& graph, const Bindings& bindings, std::size_t index) {
    const Node& node = graph.nodes()[index];
    const Tensor* t = bindings.find(node.name);
    if (!t) {
        throw ValidationError(describe(graph, index) + ": no binding supplied for leaf");
    }
    return *t;
}

void forward_node(const Graph& graph, const Bindings& bindings, std::size_t index,
                  Scratch& s) {
    const Node& node = graph.nodes()[index];
    const Shape& out_shape = s.shapes[index];
    std::vector<double> out(shape_size(out_shape), 0.0);
    auto in = [&](std::size_t k) -> const std::vector<double>& {
        return s.values[node.inputs[k]];
    };
    auto in_shape = [&](std::size_t k) -> const Shape& { return s.shapes[node.inputs[k]]; };

    switch (node.kind) {
        case OpKind::Input:
        case OpKind::Parameter: {
            const Tensor& t = leaf_value(graph, bindings, index);
            out.assign(t.data().begin(), t.data().end());
            break;
        }
        case OpKind::Add:
        case OpKind::Subtract:
        case OpKind::Multiply: {
            const auto& a = in(0);
            const auto& b = in(1);
            const std::size_t nb = b.size();
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double bv = b[i % nb];
                out[i] = node.kind == OpKind::Add        ? a[i] + bv
                         : node.kind == OpKind::Subtract ? a[i] - bv
                                                         : a[i] * bv;
            }
            break;
        }
        case OpKind::MatMul: {
            const auto& a = in(0);
            const auto& b = in(1);
            const std::size_t m = in_shape(0)[0], k = in_shape(0)[1], n = in_shape(1)[1];
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = a[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
                }
            }
            break;
        }
        case OpKind::Conv2d: {
            const auto& x = in(0);
            const auto& w = in(1);
            const auto& bias = in(2);
            const Shape& xs = in_shape(0);
            const Shape& ws = in_shape(1);
            const std::size_t n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
            const std::size_t o = ws[0], kh = ws[2], kw = ws[3];
            const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t oc = 0; oc < o; ++oc)
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t xx = 0; xx < ow; ++xx) {
                            double acc = bias[oc];
                            for (std::size_t ic = 0; ic < c; ++ic)
                                for (std::size_t ky = 0; ky < kh; ++ky)
                                    for (std::size_t kx = 0; kx < kw; ++kx)
                                        acc += x[((b * c + ic) * h + y + ky) * wd + xx + kx] *
                                               w[((oc * c + ic) * kh + ky) * kw + kx];
                            out[((b * o + oc) * oh + y) * ow + xx] = acc;
                        }
            break;
        }
        case OpKind::Relu: {
            const auto& a = in(0);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        }
        case OpKind::Tanh: {
            const auto& a = in(0);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
            break;
        }
        case OpKind::Reshape:
            out = in(0);
            break;
        case OpKind::Sum:
        case OpKind::Mean: {
            double acc = 0.0;
            for (double v : in(0)) acc += v;
            if (node.kind == OpKind::Mean) acc /= static_cast<double>(in(0).size());
            out[0] = acc;
            break;
        }
        case OpKind::MaxAxis: {
            const auto& a = in(0);
            const AxisSplit sp = split_axis(in_shape(0), node.axis);
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    double best = a[o * sp.length * sp.inner + i];
                    for (std::size_t j = 1; j < sp.length; ++j)
                        best = std::max(best, a[(o * sp.length + j) * sp.inner + i]);
                    out[o * sp.inner + i] = best;
                }
            break;
        }
        case OpKind::Softmax: {
            const auto& z = in(0);
            const std::size_t rows = in_shape(0)[0], k = in_shape(0)[1];
            for (std::size_t r = 0; r < rows; ++r) {
                const double* zr = &z[r * k];
                const double m = *std::max_element(zr, zr + k);
                double total = 0.0;
                for (std::size_t j = 0; j < k; ++j) total += (out[r * k + j] = std::exp(zr[j] - m));
                for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= total;
            }
            break;
        }
        case OpKind::SoftmaxCrossEntropy: {
            const auto& z = in(0);
            const auto& t = in(1);
            const std::size_t rows = in_shape(0)[0], k = in_shape(0)[1];
            for (std::size_t r = 0; r < rows; ++r) {
                const double* zr = &z[r * k];
                const double m = *std::max_element(zr, zr + k);
                double total = 0.0;
                for (std::size_t j = 0; j < k; ++j) total += std::exp(zr[j] - m);
                const double lse = m + std::log(total);
                double loss = 0.0;
                for (std::size_t j = 0; j < k; ++j) loss += t[r * k + j] * (lse - zr[j]);
                out[r] = loss;
            }
            break;
        }
        case OpKind::Clip: {
            const auto& a = in(0);
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = std::min(std::max(a[i], node.lower), node.upper);
            break;
        }
    }

    for (double v : out) {
        if (!std::isfinite(v)) throw OverflowError(describe(graph, index) + ": non-finite value");
    }
    s.values[index] = std::move(out);
}

Scratch run_forward(const Graph& graph, const Bindings& bindings, std::size_t last) {
    Scratch s;
    s.shapes = infer_shapes(graph, bindings);
    s.values.resize(graph.size());
    for (std::size_t i = 0; i <= last; ++i) forward_node(graph, bindings, i, s);
    return s;
}

Node make_node(OpKind kind, std::vector<std::size_t> inputs) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    return n;
}

}  // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Input: return "input";
        case OpKind::Parameter: return "parameter";
        case OpKind::Add: return "add";
        case OpKind::Subtract: return "subtract";
        case OpKind::Multiply: return "multiply";
        case OpKind::MatMul: return "matmul";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Relu: return "relu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Reshape: return "reshape";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::MaxAxis: return "max_axis";
        case OpKind::Softmax: return "softmax";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::Clip: return "clip";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::push(Node node) {
    for (auto i : node.inputs) check(NodeId{i});
    nodes_.push_back(std::move(node));
    output_ = nodes_.size() - 1;
    has_output_ = true;
    return NodeId{nodes_.size() - 1};
}

void Graph::check(NodeId id) const {
    if (id.index >= nodes_.size()) {
        throw ValidationError("node id " + std::to_string(id.index) + " does not exist");
    }
}

NodeId Graph::input(std::string name) {
    if (has_leaf(name)) throw ValidationError("duplicate leaf name '" + name + "'");
    Node n = make_node(OpKind::Input, {});
    n.name = std::move(name);
    return push(std::move(n));
}

NodeId Graph::parameter(std::string name) {
    if (has_leaf(name)) throw ValidationError("duplicate leaf name '" + name + "'");
    Node n = make_node(OpKind::Parameter, {});
    n.name = std::move(name);
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return push(make_node(OpKind::Add, {a.index, b.index})); }
NodeId Graph::subtract(NodeId a, NodeId b) { return push(make_node(OpKind::Subtract, {a.index, b.index})); }
NodeId Graph::multiply(NodeId a, NodeId b) { return push(make_node(OpKind::Multiply, {a.index, b.index})); }
NodeId Graph::matmul(NodeId a, NodeId b) { return push(make_node(OpKind::MatMul, {a.index, b.index})); }

NodeId Graph::conv2d(NodeId x, NodeId kernel, NodeId bias) {
    return push(make_node(OpKind::Conv2d, {x.index, kernel.index, bias.index}));
}

NodeId Graph::relu(NodeId x) { return push(make_node(OpKind::Relu, {x.index})); }
NodeId Graph::tanh(NodeId x) { return push(make_node(OpKind::Tanh, {x.index})); }

NodeId Graph::reshape(NodeId x, Shape target) {
    Node n = make_node(OpKind::Reshape, {x.index});
    n.target = std::move(target);
    return push(std::move(n));
}

NodeId Graph::flatten(NodeId x) {
    // Reshape to (n, -1) is expressed by a sentinel resolved at shape inference.
    Node n = make_node(OpKind::Reshape, {x.index});
    n.target = {0, std::numeric_limits<std::size_t>::max()};
    return push(std::move(n));
}

NodeId Graph::sum(NodeId x) { return push(make_node(OpKind::Sum, {x.index})); }
NodeId Graph::mean(NodeId x) { return push(make_node(OpKind::Mean, {x.index})); }

NodeId Graph::max_axis(NodeId x, std::size_t axis) {
    Node n = make_node(OpKind::MaxAxis, {x.index});
    n.axis = axis;
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId logits) {
    return push(make_node(OpKind::Softmax, {logits.index}));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId targets) {
    return push(make_node(OpKind::SoftmaxCrossEntropy, {logits.index, targets.index}));
}

NodeId Graph::clip(NodeId x, double lower, double upper) {
    if (!(lower <= upper)) throw ValidationError("clip requires lower <= upper");
    Node n = make_node(OpKind::Clip, {x.index});
    n.lower = lower;
    n.upper = upper;
    return push(std::move(n));
}

void Graph::set_output(NodeId node) {
    check(node);
    output_ = node.index;
    has_output_ = true;
}

NodeId Graph::output() const {
    if (!has_output_) throw ValidationError("graph has no output node");
    return NodeId{output_};
}

std::size_t Graph::leaf(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if ((n.kind == OpKind::Input || n.kind == OpKind::Parameter) && n.name == name) return i;
    }
    throw ValidationError("unknown leaf '" + std::string(name) + "'");
}

bool Graph::has_leaf(std::string_view name) const {
    return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) {
        return (n.kind == OpKind::Input || n.kind == OpKind::Parameter) && n.name == name;
    });
}

std::vector<std::string> Graph::leaf_names(OpKind kind) const {
    std::vector<std::string> names;
    for (const auto& n : nodes_)
        if (n.kind == kind) names.push_back(n.name);
    return names;
}

// ---------------------------------------------------------------------------
// Bindings

Bindings& Bindings::bind(std::string name, const Tensor& value) {
    values_[std::move(name)] = &value;
    return *this;
}

Bindings& Bindings::bind_all(const TensorMap& values) {
    for (const auto& [name, value] : values) bind(name, value);
    return *this;
}

const Tensor* Bindings::find(std::string_view name) const {
    auto it = values_.find(name);
    return it == values_.end() ? nullptr : it->second;
}

// ---------------------------------------------------------------------------
// Shape inference

std::vector<Shape> infer_shapes(const Graph& graph, const Bindings& bindings) {
    std::vector<Shape> shapes(graph.size());
    for (std::size_t i = 0; i < graph.size(); ++i) {
        const Node& node = graph.nodes()[i];
        auto in = [&](std::size_t k) -> const Shape& { return shapes[node.inputs[k]]; };
        switch (node.kind) {
            case OpKind::Input:
            case OpKind::Parameter:
                shapes[i] = leaf_value(graph, bindings, i).shape();
                break;
            case OpKind::Add:
            case OpKind::Subtract:
            case OpKind::Multiply:
                if (!is_suffix(in(0), in(1))) {
                    shape_fail(graph, i, "operand shapes " + shape_string(in(0)) + " and " +
                                             shape_string(in(1)) + " are not broadcastable");
                }
                shapes[i] = in(0);
                break;
            case OpKind::MatMul:
                if (in(0).size() != 2 || in(1).size() != 2 || in(0)[1] != in(1)[0]) {
                    shape_fail(graph, i, "cannot multiply " + shape_string(in(0)) + " by " +
                                             shape_string(in(1)));
                }
                shapes[i] = {in(0)[0], in(1)[1]};
                break;
            case OpKind::Conv2d: {
                const Shape& x = in(0);
                const Shape& w = in(1);
                const Shape& b = in(2);
                if (x.size() != 4 || w.size() != 4 || x[1] != w[1] || b != Shape{w[0]} ||
                    w[2] == 0 || w[3] == 0 || x[2] < w[2] || x[3] < w[3]) {
                    shape_fail(graph, i, "invalid conv2d operands x=" + shape_string(x) +
                                             " kernel=" + shape_string(w) +
                                             " bias=" + shape_string(b));
                }
                shapes[i] = {x[0], w[0], x[2] - w[2] + 1, x[3] - w[3] + 1};
                break;
            }
            case OpKind::Relu:
            case OpKind::Tanh:
            case OpKind::Clip:
                shapes[i] = in(0);
                break;
            case OpKind::Reshape: {
                Shape target = node.target;
                if (target.size() == 2 && target[1] == std::numeric_limits<std::size_t>::max()) {
                    if (in(0).empty()) shape_fail(graph, i, "cannot flatten a scalar");
                    target[1] = 1;
                    for (std::size_t d = 1; d < in(0).size(); ++d) target[1] *= in(0)[d];
                }
                Shape resolved;
                try {
                    resolved = resolve_reshape(in(0), target);
                } catch (const ShapeError& e) {
                    shape_fail(graph, i, e.what());
                }
                if (shape_size(resolved) != shape_size(in(0))) {
                    shape_fail(graph, i, "cannot reshape " + shape_string(in(0)) + " to " +
                                             shape_string(resolved));
                }
                shapes[i] = resolved;
                break;
            }
            case OpKind::Sum:
                shapes[i] = {};
                break;
            case OpKind::Mean:
                if (shape_size(in(0)) == 0) shape_fail(graph, i, "mean of an empty tensor");
                shapes[i] = {};
                break;
            case OpKind::MaxAxis: {
                if (node.axis >= in(0).size() || in(0)[node.axis] == 0) {
                    shape_fail(graph, i, "axis " + std::to_string(node.axis) +
                                             " invalid for shape " + shape_string(in(0)));
                }
                Shape s = in(0);
                s.erase(s.begin() + static_cast<std::ptrdiff_t>(node.axis));
                shapes[i] = s;
                break;
            }
            case OpKind::Softmax:
                if (in(0).size() != 2 || in(0)[1] == 0) {
                    shape_fail(graph, i, "softmax expects (n,k), got " + shape_string(in(0)));
                }
                shapes[i] = in(0);
                break;
            case OpKind::SoftmaxCrossEntropy:
                if (in(0).size() != 2 || in(0)[1] == 0 || in(0) != in(1)) {
                    shape_fail(graph, i, "softmax_cross_entropy expects matching (n,k) operands, got " +
                                             shape_string(in(0)) + " and " + shape_string(in(1)));
                }
                shapes[i] = {in(0)[0]};
                break;
        }
    }
    return shapes;
}

// ---------------------------------------------------------------------------
// Evaluation

Tensor evaluate(const Graph& graph, const Bindings& bindings) {
    const std::size_t out = graph.output().index;
    Scratch s = run_forward(graph, bindings, out);
    return Tensor(s.shapes[out], std::move(s.values[out]));
}

BackwardResult backward(const Graph& graph, const Bindings& bindings,
                        std::span<const std::string> wrt) {
    const std::size_t out = graph.output().index;
    std::vector<std::size_t> targets;
    targets.reserve(wrt.size());
    for (const auto& name : wrt) targets.push_back(graph.leaf(name));

    Scratch s = run_forward(graph, bindings, out);
    if (s.values[out].size() != 1) {
        throw ShapeError("gradient requires a scalar output, " + describe(graph, out) +
                         " has shape " + shape_string(s.shapes[out]));
    }

    // Only nodes on a path from a requested leaf need gradients.
    std::vector<char> needs(graph.size(), 0);
    for (auto t : targets) needs[t] = 1;
    for (std::size_t i = 0; i <= out; ++i) {
        for (auto j : graph.nodes()[i].inputs) needs[i] |= needs[j];
    }

    std::vector<std::vector<double>> grads(graph.size());
    auto grad_of = [&](std::size_t i) -> std::vector<double>& {
        if (grads[i].empty()) grads[i].assign(s.values[i].size(), 0.0);
        return grads[i];
    };
    grad_of(out)[0] = 1.0;

    for (std::size_t idx = out + 1; idx-- > 0;) {
        if (!needs[idx] || grads[idx].empty()) continue;
        const Node& node = graph.nodes()[idx];
        const std::vector<double>& g = grads[idx];
        auto needs_in = [&](std::size_t k) { return needs[node.inputs[k]] != 0; };
        auto val = [&](std::size_t k) -> const std::vector<double>& { return s.values[node.inputs[k]]; };
        auto shp = [&](std::size_t k) -> const Shape& { return s.shapes[node.inputs[k]]; };

        switch (node.kind) {
            case OpKind::Input:
            case OpKind::Parameter:
                break;
            case OpKind::Add:
            case OpKind::Subtract:
            case OpKind::Multiply: {
                const auto& a = val(0);
                const auto& b = val(1);
                const std::size_t nb = b.size();
                if (needs_in(0)) {
                    auto& ga = grad_of(node.inputs[0]);
                    for (std::size_t i = 0; i < g.size(); ++i)
                        ga[i] += node.kind == OpKind::Multiply ? g[i] * b[i % nb] : g[i];
                }
                if (needs_in(1)) {
                    auto& gb = grad_of(node.inputs[1]);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        gb[i % nb] += node.kind == OpKind::Add        ? g[i]
                                      : node.kind == OpKind::Subtract ? -g[i]
                                                                      : g[i] * a[i];
                    }
                }
                break;
            }
            case OpKind::MatMul: {
                const auto& a = val(0);
                const auto& b = val(1);
                const std::size_t m = shp(0)[0], k = shp(0)[1], n = shp(1)[1];
                if (needs_in(0)) {
                    auto& ga = grad_of(node.inputs[0]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
                            ga[i * k + p] += acc;
                        }
                }
                if (needs_in(1)) {
                    auto& gb = grad_of(node.inputs[1]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                            const double av = a[i * k + p];
                            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                        }
                }
                break;
            }
            case OpKind::Conv2d: {
                const auto& x = val(0);
                const auto& w = val(1);
                const Shape& xs = shp(0);
                const Shape& ws = shp(1);
                const std::size_t n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
                const std::size_t o = ws[0], kh = ws[2], kw = ws[3];
                const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
                std::vector<double>* gx = needs_in(0) ? &grad_of(node.inputs[0]) : nullptr;
                std::vector<double>* gw = needs_in(1) ? &grad_of(node.inputs[1]) : nullptr;
                std::vector<double>* gbias = needs_in(2) ? &grad_of(node.inputs[2]) : nullptr;
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t oc = 0; oc < o; ++oc)
                        for (std::size_t y = 0; y < oh; ++y)
                            for (std::size_t xx = 0; xx < ow; ++xx) {
                                const double go = g[((b * o + oc) * oh + y) * ow + xx];
                                if (gbias) (*gbias)[oc] += go;
                                for (std::size_t ic = 0; ic < c; ++ic)
                                    for (std::size_t ky = 0; ky < kh; ++ky)
                                        for (std::size_t kx = 0; kx < kw; ++kx) {
                                            const std::size_t xi = ((b * c + ic) * h + y + ky) * wd + xx + kx;
                                            const std::size_t wi = ((oc * c + ic) * kh + ky) * kw + kx;
                                            if (gx) (*gx)[xi] += go * w[wi];
                                            if (gw) (*gw)[wi] += go * x[xi];
                                        }
                            }
                break;
            }
            case OpKind::Relu: {
                const auto& a = val(0);
                auto& ga = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a[i] > 0.0) ga[i] += g[i];
                break;
            }
            case OpKind::Tanh: {
                const auto& y = s.values[idx];
                auto& ga = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case OpKind::Reshape: {
                auto& ga = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                break;
            }
            case OpKind::Sum:
            case OpKind::Mean: {
                auto& ga = grad_of(node.inputs[0]);
                const double scale =
                    node.kind == OpKind::Mean ? g[0] / static_cast<double>(ga.size()) : g[0];
                for (double& v : ga) v += scale;
                break;
            }
            case OpKind::MaxAxis: {
                const auto& a = val(0);
                auto& ga = grad_of(node.inputs[0]);
                const AxisSplit sp = split_axis(shp(0), node.axis);
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t i = 0; i < sp.inner; ++i) {
                        std::size_t arg = 0;
                        double best = a[o * sp.length * sp.inner + i];
                        for (std::size_t j = 1; j < sp.length; ++j) {
                            const double v = a[(o * sp.length + j) * sp.inner + i];
                            if (v > best) {
                                best = v;
                                arg = j;
                            }
                        }
                        ga[(o * sp.length + arg) * sp.inner + i] += g[o * sp.inner + i];
                    }
                break;
            }
            case OpKind::Softmax: {
                const auto& y = s.values[idx];
                auto& ga = grad_of(node.inputs[0]);
                const std::size_t rows = shp(0)[0], k = shp(0)[1];
                for (std::size_t r = 0; r < rows; ++r) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
                    for (std::size_t j = 0; j < k; ++j)
                        ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
                }
                break;
            }
            case OpKind::SoftmaxCrossEntropy: {
                const auto& z = val(0);
                const auto& t = val(1);
                const std::size_t rows = shp(0)[0], k = shp(0)[1];
                std::vector<double>* gz = needs_in(0) ? &grad_of(node.inputs[0]) : nullptr;
                std::vector<double>* gt = needs_in(1) ? &grad_of(node.inputs[1]) : nullptr;
                std::vector<double> p(k);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* zr = &z[r * k];
                    const double m = *std::max_element(zr, zr + k);
                    double total = 0.0;
                    for (std::size_t j = 0; j < k; ++j) total += (p[j] = std::exp(zr[j] - m));
                    const double lse = m + std::log(total);
                    double mass = 0.0;
                    for (std::size_t j = 0; j < k; ++j) mass += t[r * k + j];
                    for (std::size_t j = 0; j < k; ++j) {
                        if (gz) (*gz)[r * k + j] += g[r] * (p[j] / total * mass - t[r * k + j]);
                        if (gt) (*gt)[r * k + j] += g[r] * (lse - zr[j]);
                    }
                }
                break;
            }
            case OpKind::Clip: {
                const auto& a = val(0);
                auto& ga = grad_of(node.inputs[0]);
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (a[i] > node.lower && a[i] < node.upper) ga[i] += g[i];
                break;
            }
        }
    }

    BackwardResult result;
    result.value = s.values[out][0];
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::size_t leaf = targets[i];
        std::vector<double> g = grads[leaf].empty() ? std::vector<double>(s.values[leaf].size(), 0.0)
                                                    : grads[leaf];
        for (double v : g) {
            if (!std::isfinite(v)) throw OverflowError(describe(graph, leaf) + ": non-finite gradient");
        }
        result.gradients.insert_or_assign(wrt[i], Tensor(s.shapes[leaf], std::move(g)));
    }
    return result;
}

Tensor gradient(const Graph& graph, const Bindings& bindings, std::string_view wrt) {
    const std::string name(wrt);
    BackwardResult r = backward(graph, bindings, std::span<const std::string>(&name, 1));
    return std::move(r.gradients.begin()->second);
}

}  // namespace advbench
