#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/model_io.hpp"
#include "advbench/models.hpp"

namespace advbench {

enum class DefenseKind { FeatureSqueeze, SpatialSmooth, LabelSmooth, GaussianAugment, AdversarialTrain, Thermometer };

std::string defense_name(DefenseKind kind);
DefenseKind parse_defense(const std::string& name);

struct DefenseConfig {
    DefenseKind kind = DefenseKind::FeatureSqueeze;
    int bit_depth = 4;
    int window = 3;
    double alpha = 0.1;
    double sigma = 0.1;
    double ratio = 1.0;
    AttackConfig attack = pgd_training_attack();
    double mix_ratio = 0.5;
    int levels = 10;

    // PGD with eps 0.2, step 0.05, 7 iterations.
    static AttackConfig pgd_training_attack();
    void validate() const;
};

// round(x * (2^d - 1)) / (2^d - 1) with halves rounded away from zero.
// Values must lie in [0, 1].
Tensor squeeze_bits(const Tensor& x, int bit_depth);

// Per-plane window x window median over the last two axes, with mirrored
// borders (edge pixel not repeated). The window must be odd, >= 3 and no
// larger than either spatial dimension.
Tensor median_smooth(const Tensor& x, int window);

// y (1 - alpha) + alpha / k for one-hot rows (n, k).
Tensor smooth_labels(const Tensor& one_hot_rows, double alpha, std::size_t num_classes);

// Appends ceil(ratio * n) noisy copies (N(0, sigma^2), clipped to bounds) of
// a seeded selection of examples.
Dataset gaussian_augment(const Dataset& data, double sigma, double ratio, std::uint64_t seed,
                         Bounds bounds = {});

struct AdversarialTrainLog {
    TrainLog train;
    std::size_t substituted = 0;        // examples replaced by attack outputs
    std::vector<std::string> failures;  // attacks that threw; clean example kept
};

// Each minibatch swaps round(mix_ratio * batch) examples for attack outputs
// against the current parameters before the optimizer step.
NetworkModel adversarial_train(const NetworkModel& model, const Dataset& data, const AttackConfig& attack,
                               double mix_ratio, const TrainConfig& cfg, AdversarialTrainLog* log = nullptr);

// Channel c of the input becomes channels c*K .. c*K+K-1; level j (0-based)
// is 1 when x >= (j+1)/K. Works on (c,h,w) and (n,c,h,w) tensors.
Tensor thermometer_encode(const Tensor& x, int levels);

// Applies a recorded input transform to a batch.
Tensor apply_transform(const TransformSpec& transform, const Tensor& batch);
void validate_transform(const TransformSpec& transform);

// transform followed by a network. Exposed as prediction-only: none of the
// transforms has a usable gradient.
class DefendedModel final : public Model {
public:
    DefendedModel(NetworkModel network, TransformSpec transform);

    const ModelInfo& info() const override { return info_; }
    Tensor predict(const Tensor& batch) const override;

    const NetworkModel& network() const noexcept { return network_; }
    const TransformSpec& transform() const noexcept { return transform_; }

private:
    NetworkModel network_;
    TransformSpec transform_;
    ModelInfo info_;
};

// Trains an MLP on thermometer-encoded inputs; the result accepts raw inputs.
DefendedModel train_thermometer_model(const Dataset& data, std::size_t num_classes, int levels,
                                      const TrainConfig& cfg, TrainLog* log = nullptr);

void save_defended_model(const DefendedModel& model, const std::filesystem::path& path);

// Network or defended model, depending on whether the file records a
// transform.
std::shared_ptr<const Model> load_any_model(const std::filesystem::path& path);

}  // namespace advbench
