#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "advbench/graph.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

struct Bounds {
    double lower = 0.0;
    double upper = 1.0;

    double diameter() const noexcept { return upper - lower; }
    friend bool operator==(const Bounds&, const Bounds&) = default;
};

enum class Capability { WhiteBox, BlackBox };

struct ModelInfo {
    std::string name;
    Shape input_shape;  // (channels, height, width)
    Bounds bounds;
    std::size_t num_classes = 0;
    Capability capability = Capability::BlackBox;
};

// Scalar losses whose input gradient a white-box model can supply. Every
// variant is summed over the batch.
struct CrossEntropyLoss {
    std::vector<int> labels;  // one per batch row
};
// max_{i != target} Z_i - Z_target per row.
struct LogitMarginLoss {
    int target = 0;
};
// sum_ij weights_ij * Z_ij; one-hot rows give Jacobian rows.
struct WeightedLogitLoss {
    Tensor weights;  // (n, k)
};
using InputLoss = std::variant<CrossEntropyLoss, LogitMarginLoss, WeightedLogitLoss>;

// Classifier interface shared by local networks, defended wrappers and
// remote endpoints. Implementations are immutable after construction and
// safe to call concurrently.
class Model {
public:
    virtual ~Model() = default;

    virtual const ModelInfo& info() const = 0;

    // Logits (n, k) for a batch (n, c, h, w) whose values lie within bounds.
    virtual Tensor predict(const Tensor& batch) const = 0;

    // Gradient of `loss` with respect to the batch. Prediction-only models
    // throw CapabilityError.
    virtual Tensor input_gradient(const Tensor& batch, const InputLoss& loss) const;

    bool white_box() const { return info().capability == Capability::WhiteBox; }
};

// Throws ShapeError / BoundsError unless `batch` is (n, input_shape...) with
// every value inside the model bounds.
void validate_batch(const ModelInfo& info, const Tensor& batch);

// Argmax per row; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);
int predict_label(const Model& model, const Tensor& example);
// Fraction of examples whose predicted label matches.
double accuracy(const Model& model, const Tensor& images, std::span<const int> labels,
                std::size_t batch_size = 256);

enum class Architecture { Logistic, Mlp, Cnn };

std::string architecture_name(Architecture arch);
Architecture parse_architecture(const std::string& name);

inline constexpr std::size_t kMlpHidden = 64;
inline constexpr std::size_t kCnnChannels = 8;
inline constexpr std::size_t kCnnKernel = 3;

// Parameter names and shapes of an architecture, in declaration order.
std::vector<std::pair<std::string, Shape>> parameter_layout(Architecture arch,
                                                            const Shape& input_shape,
                                                            std::size_t num_classes);

// Reference classifier backed by an autodiff graph:
//   logistic  flatten -> dense(k)
//   mlp       flatten -> dense(64) -> relu -> dense(k)
//   cnn       conv 3x3x8 -> relu -> flatten -> dense(k)
// Dense weights are (fan_in, fan_out); logits = x W + b.
class NetworkModel final : public Model {
public:
    NetworkModel(Architecture arch, Shape input_shape, std::size_t num_classes, TensorMap parameters,
                 Bounds bounds = {});

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation per parameter.
    static NetworkModel initialize(Architecture arch, Shape input_shape, std::size_t num_classes,
                                   std::uint64_t seed, Bounds bounds = {});

    const ModelInfo& info() const override { return info_; }
    Tensor predict(const Tensor& batch) const override;
    Tensor input_gradient(const Tensor& batch, const InputLoss& loss) const override;

    Architecture architecture() const noexcept { return arch_; }
    const TensorMap& parameters() const noexcept { return params_; }
    const Graph& logits_graph() const noexcept { return logits_graph_; }

    // Mean soft-label cross-entropy of a batch and its parameter gradients.
    BackwardResult loss_and_parameter_gradients(const Tensor& batch, const Tensor& soft_labels) const;

    NetworkModel with_parameters(TensorMap parameters) const;

private:
    Architecture arch_;
    TensorMap params_;
    ModelInfo info_;
    Graph logits_graph_;     // x -> logits
    Graph ce_sum_graph_;     // sum of per-row CE against targets "y"
    Graph ce_mean_graph_;    // mean of per-row CE against targets "y"
    Graph weighted_graph_;   // sum(logits * "w")
    std::vector<std::string> param_names_;
};

// Content identity used in reports and service metadata:
// "<architecture>-<16 hex digits of FNV-1a over shapes and parameter bytes>".
std::string model_fingerprint(Architecture arch, const TensorMap& parameters);

struct Dataset;

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    double label_smoothing = 0.0;

    void validate() const;
};

struct TrainLog {
    std::vector<double> epoch_losses;  // mean minibatch loss per epoch
};

// Called before each optimizer step; may rewrite the minibatch images.
using BatchHook = std::function<void(const NetworkModel& current, Tensor& images,
                                     std::span<const int> labels, std::size_t epoch,
                                     std::size_t batch_index)>;

// Adam on mean soft-label cross-entropy. Returns a new model; `model` is
// untouched. Deterministic for a given seed.
NetworkModel train(const NetworkModel& model, const Dataset& data, const TrainConfig& cfg,
                   TrainLog* log = nullptr, const BatchHook& hook = {});

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

}  // namespace advbench
