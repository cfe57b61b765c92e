#include "advbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "advbench/adam.hpp"
#include "advbench/dataset.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {

Tensor Model::input_gradient(const Tensor&, const InputLoss&) const {
    throw CapabilityError("model '" + info().name + "' is prediction-only; gradients are unavailable");
}

void validate_batch(const ModelInfo& info, const Tensor& batch) {
    const Shape& s = batch.shape();
    if (s.size() != info.input_shape.size() + 1 ||
        !std::equal(info.input_shape.begin(), info.input_shape.end(), s.begin() + 1)) {
        throw ShapeError("batch shape " + shape_string(s) + " does not match (n," +
                         shape_string(info.input_shape).substr(1));
    }
    for (double v : batch.data()) {
        if (!(v >= info.bounds.lower && v <= info.bounds.upper)) {
            throw BoundsError("input value " + std::to_string(v) + " outside model bounds [" +
                              std::to_string(info.bounds.lower) + ", " +
                              std::to_string(info.bounds.upper) + "]");
        }
    }
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("argmax_rows expects (n,k) logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n, 0);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits[r * k + j] > logits[r * k + best]) best = j;
        out[r] = static_cast<int>(best);
    }
    return out;
}

int predict_label(const Model& model, const Tensor& example) {
    return argmax_rows(model.predict(batch_of_one(example)))[0];
}

double accuracy(const Model& model, const Tensor& images, std::span<const int> labels,
                std::size_t batch_size) {
    const std::size_t n = labels.size();
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
        const std::size_t end = std::min(n, begin + batch_size);
        const auto predicted = argmax_rows(model.predict(images.rows(begin, end)));
        for (std::size_t i = begin; i < end; ++i)
            if (predicted[i - begin] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::string architecture_name(Architecture arch) {
    switch (arch) {
        case Architecture::Logistic: return "logistic";
        case Architecture::Mlp: return "mlp";
        case Architecture::Cnn: return "cnn";
    }
    return "unknown";
}

Architecture parse_architecture(const std::string& name) {
    if (name == "logistic") return Architecture::Logistic;
    if (name == "mlp") return Architecture::Mlp;
    if (name == "cnn") return Architecture::Cnn;
    throw ValidationError("unknown architecture '" + name + "' (expected logistic, mlp or cnn)");
}

std::vector<std::pair<std::string, Shape>> parameter_layout(Architecture arch,
                                                            const Shape& input_shape,
                                                            std::size_t num_classes) {
    if (input_shape.size() != 3 || shape_size(input_shape) == 0) {
        throw ValidationError("input shape must be (channels, height, width), got " +
                              shape_string(input_shape));
    }
    if (num_classes < 2) throw ValidationError("a classifier needs at least 2 classes");
    const std::size_t features = shape_size(input_shape);
    switch (arch) {
        case Architecture::Logistic:
            return {{"output.weight", {features, num_classes}}, {"output.bias", {num_classes}}};
        case Architecture::Mlp:
            return {{"hidden.weight", {features, kMlpHidden}},
                    {"hidden.bias", {kMlpHidden}},
                    {"output.weight", {kMlpHidden, num_classes}},
                    {"output.bias", {num_classes}}};
        case Architecture::Cnn: {
            const std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
            if (h < kCnnKernel || w < kCnnKernel) {
                throw ValidationError("cnn needs spatial dims >= 3, got " + shape_string(input_shape));
            }
            const std::size_t flat = kCnnChannels * (h - kCnnKernel + 1) * (w - kCnnKernel + 1);
            return {{"conv.weight", {kCnnChannels, c, kCnnKernel, kCnnKernel}},
                    {"conv.bias", {kCnnChannels}},
                    {"output.weight", {flat, num_classes}},
                    {"output.bias", {num_classes}}};
        }
    }
    throw ValidationError("unknown architecture");
}

namespace {

Graph build_logits_graph(Architecture arch) {
    Graph g;
    NodeId x = g.input("x");
    NodeId features;
    switch (arch) {
        case Architecture::Logistic:
            features = g.flatten(x);
            break;
        case Architecture::Mlp: {
            NodeId flat = g.flatten(x);
            NodeId w = g.parameter("hidden.weight");
            NodeId b = g.parameter("hidden.bias");
            features = g.relu(g.add(g.matmul(flat, w), b));
            break;
        }
        case Architecture::Cnn: {
            NodeId k = g.parameter("conv.weight");
            NodeId b = g.parameter("conv.bias");
            features = g.flatten(g.relu(g.conv2d(x, k, b)));
            break;
        }
    }
    NodeId w = g.parameter("output.weight");
    NodeId b = g.parameter("output.bias");
    g.set_output(g.add(g.matmul(features, w), b));
    return g;
}

std::size_t fan_in(const std::string& name, const Shape& shape,
                   const std::vector<std::pair<std::string, Shape>>& layout) {
    // Biases share the fan-in of their layer's weight.
    std::string weight = name;
    if (name.ends_with(".bias")) weight = name.substr(0, name.size() - 5) + ".weight";
    for (const auto& [n, s] : layout) {
        if (n != weight) continue;
        if (s.size() == 4) return s[1] * s[2] * s[3];
        return s[0];
    }
    return shape.empty() ? 1 : shape[0];
}

}  // namespace

std::string model_fingerprint(Architecture arch, const TensorMap& parameters) {
    std::uint64_t h = fnv1a64(architecture_name(arch));
    for (const auto& [name, t] : parameters) {
        h = fnv1a64(name, h);
        h = fnv1a64(shape_string(t.shape()), h);
        for (double v : t.data()) {
            unsigned char bytes[8];
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
            h = fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes), 8), h);
        }
    }
    std::ostringstream os;
    os << architecture_name(arch) << '-' << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

NetworkModel::NetworkModel(Architecture arch, Shape input_shape, std::size_t num_classes,
                           TensorMap parameters, Bounds bounds)
    : arch_(arch), params_(std::move(parameters)) {
    if (!(bounds.lower < bounds.upper)) throw ValidationError("model bounds require lower < upper");
    const auto layout = parameter_layout(arch, input_shape, num_classes);
    if (params_.size() != layout.size()) {
        throw ValidationError(architecture_name(arch) + " expects " + std::to_string(layout.size()) +
                              " parameters, got " + std::to_string(params_.size()));
    }
    for (const auto& [name, shape] : layout) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ValidationError("missing parameter '" + name + "'");
        if (it->second.shape() != shape) {
            throw ShapeError("parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                             ", expected " + shape_string(shape));
        }
        param_names_.push_back(name);
    }

    info_.name = model_fingerprint(arch, params_);
    info_.input_shape = std::move(input_shape);
    info_.bounds = bounds;
    info_.num_classes = num_classes;
    info_.capability = Capability::WhiteBox;

    logits_graph_ = build_logits_graph(arch);
    const NodeId logits = logits_graph_.output();

    ce_sum_graph_ = logits_graph_;
    {
        NodeId y = ce_sum_graph_.input("y");
        ce_sum_graph_.set_output(ce_sum_graph_.sum(ce_sum_graph_.softmax_cross_entropy(logits, y)));
    }
    ce_mean_graph_ = logits_graph_;
    {
        NodeId y = ce_mean_graph_.input("y");
        ce_mean_graph_.set_output(
            ce_mean_graph_.mean(ce_mean_graph_.softmax_cross_entropy(logits, y)));
    }
    weighted_graph_ = logits_graph_;
    {
        NodeId w = weighted_graph_.input("w");
        weighted_graph_.set_output(weighted_graph_.sum(weighted_graph_.multiply(logits, w)));
    }
}

NetworkModel NetworkModel::initialize(Architecture arch, Shape input_shape, std::size_t num_classes,
                                      std::uint64_t seed, Bounds bounds) {
    const auto layout = parameter_layout(arch, input_shape, num_classes);
    TensorMap params;
    for (const auto& [name, shape] : layout) {
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in(name, shape, layout)));
        CounterRng rng(seed, "init/" + name);
        std::vector<double> values(shape_size(shape));
        for (double& v : values) v = rng.uniform(-limit, limit);
        params.emplace(name, Tensor(shape, std::move(values)));
    }
    return NetworkModel(arch, std::move(input_shape), num_classes, std::move(params), bounds);
}

NetworkModel NetworkModel::with_parameters(TensorMap parameters) const {
    return NetworkModel(arch_, info_.input_shape, info_.num_classes, std::move(parameters),
                        info_.bounds);
}

Tensor NetworkModel::predict(const Tensor& batch) const {
    validate_batch(info_, batch);
    if (batch.dim(0) == 0) return Tensor({0, info_.num_classes});
    Bindings b;
    b.bind_all(params_).bind("x", batch);
    return evaluate(logits_graph_, b);
}

Tensor NetworkModel::input_gradient(const Tensor& batch, const InputLoss& loss) const {
    validate_batch(info_, batch);
    const std::size_t n = batch.dim(0);
    const std::size_t k = info_.num_classes;
    Bindings b;
    b.bind_all(params_).bind("x", batch);

    if (const auto* ce = std::get_if<CrossEntropyLoss>(&loss)) {
        if (ce->labels.size() != n) {
            throw ShapeError("cross-entropy loss needs one label per batch row");
        }
        const Tensor y = one_hot(ce->labels, k);
        b.bind("y", y);
        return gradient(ce_sum_graph_, b, "x");
    }

    Tensor weights;
    if (const auto* margin = std::get_if<LogitMarginLoss>(&loss)) {
        if (margin->target < 0 || static_cast<std::size_t>(margin->target) >= k) {
            throw ValidationError("logit-margin target out of range");
        }
        const Tensor logits = evaluate(logits_graph_, b);
        const auto t = static_cast<std::size_t>(margin->target);
        weights = Tensor({n, k});
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = t == 0 ? 1 : 0;
            for (std::size_t j = 0; j < k; ++j)
                if (j != t && logits[r * k + j] > logits[r * k + best]) best = j;
            weights[r * k + best] = 1.0;
            weights[r * k + t] = -1.0;
        }
    } else {
        weights = std::get<WeightedLogitLoss>(loss).weights;
        if (weights.shape() != Shape{n, k}) {
            throw ShapeError("logit weights must be (n,k), got " + shape_string(weights.shape()));
        }
    }
    b.bind("w", weights);
    return gradient(weighted_graph_, b, "x");
}

BackwardResult NetworkModel::loss_and_parameter_gradients(const Tensor& batch,
                                                          const Tensor& soft_labels) const {
    Bindings b;
    b.bind_all(params_).bind("x", batch).bind("y", soft_labels);
    return backward(ce_mean_graph_, b, param_names_);
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
    Tensor y({labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ValidationError("label " + std::to_string(labels[i]) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        y[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return y;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
        throw ValidationError("train: label_smoothing must be in [0, 1)");
    }
}

NetworkModel train(const NetworkModel& model, const Dataset& data, const TrainConfig& cfg,
                   TrainLog* log, const BatchHook& hook) {
    cfg.validate();
    const ModelInfo& info = model.info();
    data.validate(info.num_classes);
    if (data.example_shape() != info.input_shape) {
        throw ShapeError("dataset examples " + shape_string(data.example_shape()) +
                         " do not match model input " + shape_string(info.input_shape));
    }
    if (data.size() == 0) throw ValidationError("train: dataset is empty");

    const std::size_t n = data.size();
    const std::size_t k = info.num_classes;
    const double alpha = cfg.label_smoothing;
    TensorMap params = model.parameters();
    AdamState adam(AdamConfig{.learning_rate = cfg.learning_rate});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        CounterRng rng(cfg.seed, "train/shuffle/" + std::to_string(epoch));
        const auto order = permutation(n, rng);
        double loss_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batches) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
            Dataset batch = data.subset(idx);
            const NetworkModel current = model.with_parameters(params);
            if (hook) hook(current, batch.images, batch.labels, epoch, batches);
            Tensor soft = one_hot(batch.labels, k);
            for (double& v : soft.data()) v = v * (1.0 - alpha) + alpha / static_cast<double>(k);

            BackwardResult r;
            try {
                r = current.loss_and_parameter_gradients(batch.images, soft);
            } catch (const OverflowError& e) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batches) + ": " + e.what());
            }
            if (!std::isfinite(r.value)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batches));
            }
            loss_total += r.value;
            try {
                adam.step(params, r.gradients);
            } catch (const OverflowError& e) {
                throw TrainingError("parameters diverged at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batches) + ": " + e.what());
            }
        }
        if (log) log->epoch_losses.push_back(loss_total / static_cast<double>(batches));
    }
    return model.with_parameters(std::move(params));
}

}  // namespace advbench
