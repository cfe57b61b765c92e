#include "advbench/defenses.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {
namespace {

void require_unit_range(const Tensor& x, const char* what) {
    for (double v : x.data()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw BoundsError(std::string(what) + ": value " + std::to_string(v) + " outside [0, 1]");
        }
    }
}

// Mirror index into [0, n) without repeating the edge element.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
    return static_cast<std::size_t>(i);
}

std::string transform_label(const TransformSpec& t) { return t.kind + "(" + std::to_string(t.parameter) + ")"; }

}  // namespace

std::string defense_name(DefenseKind kind) {
    switch (kind) {
        case DefenseKind::FeatureSqueeze: return "feature_squeeze";
        case DefenseKind::SpatialSmooth: return "spatial_smooth";
        case DefenseKind::LabelSmooth: return "label_smooth";
        case DefenseKind::GaussianAugment: return "gaussian_augment";
        case DefenseKind::AdversarialTrain: return "adversarial_train";
        case DefenseKind::Thermometer: return "thermometer";
    }
    return "unknown";
}

DefenseKind parse_defense(const std::string& name) {
    for (auto kind : {DefenseKind::FeatureSqueeze, DefenseKind::SpatialSmooth, DefenseKind::LabelSmooth,
                      DefenseKind::GaussianAugment, DefenseKind::AdversarialTrain, DefenseKind::Thermometer}) {
        if (defense_name(kind) == name) return kind;
    }
    throw ValidationError("unknown defense '" + name +
                          "' (expected feature_squeeze, spatial_smooth, label_smooth, gaussian_augment, "
                          "adversarial_train or thermometer)");
}

AttackConfig DefenseConfig::pgd_training_attack() {
    AttackConfig cfg = AttackConfig::defaults(AttackAlgorithm::Pgd);
    cfg.epsilon = 0.2;
    cfg.step_size = 0.05;
    cfg.iterations = 7;
    return cfg;
}

void DefenseConfig::validate() const {
    switch (kind) {
        case DefenseKind::FeatureSqueeze:
            if (bit_depth < 1 || bit_depth > 16) throw ValidationError("defense: bit_depth must be in [1, 16]");
            break;
        case DefenseKind::SpatialSmooth:
            if (window < 3 || window % 2 == 0) throw ValidationError("defense: window must be odd and >= 3");
            break;
        case DefenseKind::LabelSmooth:
            if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("defense: alpha must be in [0, 1)");
            break;
        case DefenseKind::GaussianAugment:
            if (!(sigma > 0.0)) throw ValidationError("defense: sigma must be > 0");
            if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("defense: ratio must be in (0, 1]");
            break;
        case DefenseKind::AdversarialTrain:
            attack.validate();
            if (!epsilon_parameterized(attack.algorithm)) {
                throw ValidationError("defense: adversarial training needs fgsm, bim or pgd");
            }
            if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw ValidationError("defense: mix_ratio must be in [0, 1]");
            break;
        case DefenseKind::Thermometer:
            if (levels < 2) throw ValidationError("defense: thermometer levels must be >= 2");
            break;
    }
}

Tensor squeeze_bits(const Tensor& x, int bit_depth) {
    if (bit_depth < 1 || bit_depth > 16) throw ValidationError("squeeze_bits: bit depth must be in [1, 16]");
    require_unit_range(x, "squeeze_bits");
    const double levels = std::ldexp(1.0, bit_depth) - 1.0;
    Tensor out = x;
    for (double& v : out.data()) v = std::round(v * levels) / levels;
    return out;
}

Tensor median_smooth(const Tensor& x, int window) {
    if (window < 3 || window % 2 == 0) throw ValidationError("median_smooth: window must be odd and >= 3");
    if (x.rank() < 2) throw ShapeError("median_smooth needs at least two spatial axes");
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    const auto win = static_cast<std::size_t>(window);
    if (win > h || win > w) {
        throw ValidationError("median_smooth: window " + std::to_string(window) + " larger than image " +
                              std::to_string(h) + "x" + std::to_string(w));
    }
    const auto half = static_cast<std::ptrdiff_t>(window / 2);
    const std::size_t planes = x.size() / (h * w);
    Tensor out(x.shape());
    std::vector<double> buf(win * win);
    for (std::size_t p = 0; p < planes; ++p) {
        const std::size_t base = p * h * w;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                std::size_t n = 0;
                for (std::ptrdiff_t dr = -half; dr <= half; ++dr)
                    for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
                        const std::size_t rr = reflect(static_cast<std::ptrdiff_t>(r) + dr, h);
                        const std::size_t cc = reflect(static_cast<std::ptrdiff_t>(c) + dc, w);
                        buf[n++] = x[base + rr * w + cc];
                    }
                auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
                std::nth_element(buf.begin(), mid, buf.end());
                out[base + r * w + c] = *mid;
            }
    }
    return out;
}

Tensor smooth_labels(const Tensor& one_hot_rows, double alpha, std::size_t num_classes) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw ValidationError("smooth_labels: alpha must be in [0, 1)");
    if (one_hot_rows.rank() != 2 || one_hot_rows.dim(1) != num_classes) {
        throw ShapeError("smooth_labels expects (n, " + std::to_string(num_classes) + ") rows, got " +
                         shape_string(one_hot_rows.shape()));
    }
    Tensor out = one_hot_rows;
    const std::size_t n = one_hot_rows.dim(0);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t ones = 0;
        for (std::size_t j = 0; j < num_classes; ++j) {
            const double v = one_hot_rows[r * num_classes + j];
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                ones = 2;
                break;
            }
        }
        if (ones != 1) throw ValidationError("smooth_labels: row " + std::to_string(r) + " is not one-hot");
        for (std::size_t j = 0; j < num_classes; ++j) {
            double& v = out[r * num_classes + j];
            v = v * (1.0 - alpha) + alpha / static_cast<double>(num_classes);
        }
    }
    return out;
}

Dataset gaussian_augment(const Dataset& data, double sigma, double ratio, std::uint64_t seed, Bounds bounds) {
    if (!(sigma > 0.0)) throw ValidationError("gaussian_augment: sigma must be > 0");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("gaussian_augment: ratio must be in (0, 1]");
    const std::size_t n = data.size();
    // The small slack keeps ratio*n that is integral in exact arithmetic from
    // rounding up past it.
    const auto extra = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));

    CounterRng pick(seed, "augment/select");
    auto order = permutation(n, pick);
    order.resize(extra);
    Dataset noisy = data.subset(order);
    CounterRng noise(seed, "augment/noise");
    for (double& v : noisy.images.data()) v = std::clamp(v + sigma * noise.normal(), bounds.lower, bounds.upper);

    std::vector<double> values(data.images.data().begin(), data.images.data().end());
    values.insert(values.end(), noisy.images.data().begin(), noisy.images.data().end());
    Shape shape = data.images.shape();
    shape[0] = n + extra;
    std::vector<int> labels = data.labels;
    labels.insert(labels.end(), noisy.labels.begin(), noisy.labels.end());
    return Dataset{Tensor(std::move(shape), std::move(values)), std::move(labels)};
}

NetworkModel adversarial_train(const NetworkModel& model, const Dataset& data, const AttackConfig& attack,
                               double mix_ratio, const TrainConfig& cfg, AdversarialTrainLog* log) {
    attack.validate();
    if (!epsilon_parameterized(attack.algorithm)) {
        throw ValidationError("adversarial training needs fgsm, bim or pgd, not " + algorithm_name(attack.algorithm));
    }
    if (attack.targeted) throw ValidationError("adversarial training uses untargeted attacks");
    if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) {
        throw ValidationError("adversarial training: mix_ratio must be in [0, 1]");
    }

    AdversarialTrainLog local;
    AdversarialTrainLog& out = log ? *log : local;
    auto hook = [&](const NetworkModel& current, Tensor& images, std::span<const int> labels, std::size_t epoch,
                    std::size_t batch) {
        const std::size_t b = labels.size();
        const auto swap = static_cast<std::size_t>(std::round(mix_ratio * static_cast<double>(b)));
        if (swap == 0) return;
        const std::size_t stride = images.size() / b;
        for (std::size_t i = 0; i < swap; ++i) {
            AttackConfig c = attack;
            c.seed = derive_seed(attack.seed, "advtrain/" + std::to_string(epoch) + "/" + std::to_string(batch) +
                                                  "/" + std::to_string(i));
            try {
                const Adversary a = run_attack(current, Adversary::untargeted(images.row(i), labels[i]), c);
                const auto src = a.candidate->data();
                std::copy(src.begin(), src.end(), images.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
                ++out.substituted;
            } catch (const Error& e) {
                out.failures.push_back("epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch) +
                                       ", row " + std::to_string(i) + ": " + e.what());
            }
        }
    };
    return train(model, data, cfg, &out.train, hook);
}

Tensor thermometer_encode(const Tensor& x, int levels) {
    if (levels < 2) throw ValidationError("thermometer_encode: levels must be >= 2");
    if (x.rank() != 3 && x.rank() != 4) throw ShapeError("thermometer_encode expects (c,h,w) or (n,c,h,w)");
    require_unit_range(x, "thermometer_encode");
    const auto k = static_cast<std::size_t>(levels);
    const std::size_t r = x.rank();
    const std::size_t channels = x.dim(r - 3);
    const std::size_t plane = x.dim(r - 2) * x.dim(r - 1);
    const std::size_t outer = x.size() / (channels * plane);
    Shape shape = x.shape();
    shape[r - 3] = channels * k;
    Tensor out(shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t j = 0; j < k; ++j) {
                const double threshold = static_cast<double>(j + 1) / static_cast<double>(k);
                const std::size_t src = (o * channels + c) * plane;
                const std::size_t dst = ((o * channels + c) * k + j) * plane;
                for (std::size_t p = 0; p < plane; ++p) out[dst + p] = x[src + p] >= threshold ? 1.0 : 0.0;
            }
    return out;
}

void validate_transform(const TransformSpec& t) {
    if (t.kind == "squeeze_bits") {
        if (t.parameter < 1 || t.parameter > 16) throw ValidationError("squeeze_bits: bit depth must be in [1, 16]");
    } else if (t.kind == "median_smooth") {
        if (t.parameter < 3 || t.parameter % 2 == 0) throw ValidationError("median_smooth: window must be odd and >= 3");
    } else if (t.kind == "thermometer") {
        if (t.parameter < 2) throw ValidationError("thermometer: levels must be >= 2");
    } else {
        throw ValidationError("unknown input transform '" + t.kind + "'");
    }
}

Tensor apply_transform(const TransformSpec& t, const Tensor& batch) {
    if (t.kind == "squeeze_bits") return squeeze_bits(batch, t.parameter);
    if (t.kind == "median_smooth") return median_smooth(batch, t.parameter);
    if (t.kind == "thermometer") return thermometer_encode(batch, t.parameter);
    throw ValidationError("unknown input transform '" + t.kind + "'");
}

DefendedModel::DefendedModel(NetworkModel network, TransformSpec transform)
    : network_(std::move(network)), transform_(std::move(transform)) {
    validate_transform(transform_);
    const ModelInfo& inner = network_.info();
    info_ = inner;
    info_.capability = Capability::BlackBox;
    info_.name = inner.name + "+" + transform_label(transform_);
    if (transform_.kind == "thermometer") {
        const auto k = static_cast<std::size_t>(transform_.parameter);
        if (inner.input_shape.size() != 3 || inner.input_shape[0] % k != 0) {
            throw ValidationError("thermometer network input " + shape_string(inner.input_shape) +
                                  " is not a multiple of " + std::to_string(k) + " channels");
        }
        info_.input_shape[0] = inner.input_shape[0] / k;
        info_.bounds = Bounds{0.0, 1.0};
    }
    if (!(info_.bounds.lower >= 0.0 && info_.bounds.upper <= 1.0)) {
        throw ValidationError("input transforms need model bounds inside [0, 1]");
    }
}

Tensor DefendedModel::predict(const Tensor& batch) const {
    validate_batch(info_, batch);
    if (batch.dim(0) == 0) return Tensor({0, info_.num_classes});
    return network_.predict(apply_transform(transform_, batch));
}

DefendedModel train_thermometer_model(const Dataset& data, std::size_t num_classes, int levels,
                                      const TrainConfig& cfg, TrainLog* log) {
    if (levels < 2) throw ValidationError("thermometer: levels must be >= 2");
    Dataset encoded{thermometer_encode(data.images, levels), data.labels};
    const NetworkModel init =
        NetworkModel::initialize(Architecture::Mlp, encoded.example_shape(), num_classes, cfg.seed);
    return DefendedModel(train(init, encoded, cfg, log), TransformSpec{"thermometer", levels});
}

void save_defended_model(const DefendedModel& model, const std::filesystem::path& path) {
    save_model(model.network(), path, model.transform());
}

std::shared_ptr<const Model> load_any_model(const std::filesystem::path& path) {
    ModelFile file = read_model_file(path);
    if (!file.transform) return std::make_shared<const NetworkModel>(std::move(file.network));
    try {
        return std::make_shared<const DefendedModel>(std::move(file.network), *file.transform);
    } catch (const ValidationError& e) {
        throw CorruptFileError("model file '" + path.string() + "': " + e.what());
    }
}

}  // namespace advbench
