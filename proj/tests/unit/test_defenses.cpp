#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "advbench/dataset.hpp"
#include "advbench/defenses.hpp"
#include "advbench/error.hpp"
#include "advbench/model_io.hpp"
#include "support/oracles.hpp"

using namespace advbench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "advbench-test-defenses";
    fs::create_directories(dir);
    return dir / name;
}

// Brute-force median filter on one (h, w) plane with mirrored borders that
// do not repeat the edge pixel.
std::vector<double> reference_median(const std::vector<double>& plane, std::size_t h, std::size_t w, int window) {
    const auto mirror = [](long i, long n) {
        while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
        return static_cast<std::size_t>(i);
    };
    const long r = window / 2;
    std::vector<double> out(h * w);
    for (long y = 0; y < static_cast<long>(h); ++y)
        for (long x = 0; x < static_cast<long>(w); ++x) {
            std::vector<double> vals;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx)
                    vals.push_back(plane[mirror(y + dy, static_cast<long>(h)) * w + mirror(x + dx, static_cast<long>(w))]);
            std::sort(vals.begin(), vals.end());
            out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = vals[vals.size() / 2];
        }
    return out;
}

}  // namespace

TEST(SqueezeBits, HandValues) {
    const Tensor x = Tensor::vector({0.0, 0.49, 0.5, 1.0});
    EXPECT_EQ(squeeze_bits(x, 1), Tensor::vector({0, 0, 1, 1}));
    const Tensor y = squeeze_bits(Tensor::vector({0.5, 0.2}), 2);
    EXPECT_DOUBLE_EQ(y[0], 2.0 / 3.0);  // 1.5 rounds away from zero
    EXPECT_DOUBLE_EQ(y[1], 1.0 / 3.0);
}

TEST(SqueezeBits, PropertiesOnRandomInputs) {
    CounterRng rng(1, "squeeze");
    for (int depth = 1; depth <= 8; ++depth) {
        const double levels = std::pow(2.0, depth) - 1;
        const Tensor x = oracle::random_tensor({200}, rng, 0, 1);
        const Tensor y = squeeze_bits(x, depth);
        EXPECT_EQ(squeeze_bits(y, depth), y);
        std::set<double> distinct(y.data().begin(), y.data().end());
        EXPECT_LE(distinct.size(), static_cast<std::size_t>(levels) + 1);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y[i] - x[i]), 0.5 / levels + 1e-15);
    }
}

TEST(SqueezeBits, RejectsBadInput) {
    EXPECT_THROW(squeeze_bits(Tensor::vector({1.2}), 4), BoundsError);
    EXPECT_THROW(squeeze_bits(Tensor::vector({0.2}), 0), ValidationError);
}

TEST(MedianSmooth, MatchesBruteForce) {
    CounterRng rng(2, "median");
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t h = 3 + rng.below(5), w = 3 + rng.below(5);
        const int window = (trial % 2 == 0 || std::min(h, w) < 5) ? 3 : 5;
        const Tensor x = oracle::random_tensor({2, h, w}, rng, 0, 1);
        const Tensor y = median_smooth(x, window);
        ASSERT_EQ(y.shape(), x.shape());
        for (std::size_t c = 0; c < 2; ++c) {
            std::vector<double> plane(x.data().begin() + static_cast<long>(c * h * w),
                                      x.data().begin() + static_cast<long>((c + 1) * h * w));
            const auto expect = reference_median(plane, h, w, window);
            for (std::size_t i = 0; i < h * w; ++i) ASSERT_EQ(y[c * h * w + i], expect[i]) << trial;
        }
    }
}

TEST(MedianSmooth, ConstantImageIsFixed) {
    const Tensor x = Tensor::filled({1, 2, 5, 5}, 0.3);
    EXPECT_EQ(median_smooth(x, 3), x);
}

TEST(MedianSmooth, RejectsBadWindow) {
    const Tensor x({1, 4, 4});
    EXPECT_THROW(median_smooth(x, 2), ValidationError);
    EXPECT_THROW(median_smooth(x, 1), ValidationError);
    EXPECT_THROW(median_smooth(x, 5), ValidationError);
}

TEST(LabelSmoothing, HandValuesAndRowSums) {
    const Tensor y = smooth_labels(Tensor::matrix({{0, 1, 0, 0}}), 0.2, 4);
    EXPECT_DOUBLE_EQ(y[1], 0.8 + 0.05);
    EXPECT_DOUBLE_EQ(y[0], 0.05);
    double total = 0;
    for (double v : y.data()) total += v;
    EXPECT_NEAR(total, 1.0, 1e-15);
    EXPECT_THROW(smooth_labels(Tensor::matrix({{0.5, 0.5}}), 0.1, 2), ValidationError);
}

TEST(GaussianAugment, AppendsNoisyCopiesWithSourceLabels) {
    const auto data = generate_blobs(3, 30, 3, 6);
    const auto aug = gaussian_augment(data, 1e-4, 0.5, 9);
    ASSERT_EQ(aug.size(), 45u);
    EXPECT_EQ(aug.slice(0, 30).images, data.images);
    EXPECT_EQ(aug.slice(0, 30).labels, data.labels);
    for (std::size_t i = 30; i < 45; ++i) {
        // The nearest original is the source of a tiny-sigma copy.
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t j = 0; j < 30; ++j) {
            const double d = distance(PerturbationMetric::l2(), aug.image(i), data.image(j));
            if (d < best_d) best_d = d, best = j;
        }
        EXPECT_LT(best_d, 1e-2);
        EXPECT_EQ(aug.labels[i], data.labels[best]);
        const Tensor copy = aug.image(i);
        for (double v : copy.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    const auto again = gaussian_augment(data, 1e-4, 0.5, 9);
    EXPECT_EQ(again.images, aug.images);
    EXPECT_NE(gaussian_augment(data, 1e-4, 0.5, 10).images, aug.images);
}

TEST(GaussianAugment, CountRoundsUp) {
    const auto data = generate_blobs(3, 7, 2, 4);
    EXPECT_EQ(gaussian_augment(data, 0.1, 0.3, 1).size(), 7u + 3u);
    EXPECT_EQ(gaussian_augment(data, 0.1, 1.0, 1).size(), 14u);
    EXPECT_THROW(gaussian_augment(data, 0.0, 1.0, 1), ValidationError);
}

TEST(Thermometer, EncodesLevels) {
    const Tensor x({1, 1, 2}, {0.05, 0.5});
    const Tensor e = thermometer_encode(x, 4);
    ASSERT_EQ(e.shape(), (Shape{4, 1, 2}));
    // Level j is lit when x >= (j+1)/4.
    EXPECT_EQ(e, Tensor({4, 1, 2}, {0, 1, 0, 1, 0, 0, 0, 0}));
    const Tensor batch = thermometer_encode(Tensor({2, 3, 2, 2}), 5);
    EXPECT_EQ(batch.shape(), (Shape{2, 15, 2, 2}));
}

TEST(Thermometer, MonotoneInInput) {
    CounterRng rng(4, "thermo");
    for (int t = 0; t < 100; ++t) {
        const double a = rng.uniform(), b = rng.uniform();
        const Tensor ea = thermometer_encode(Tensor({1, 1, 1}, {std::min(a, b)}), 10);
        const Tensor eb = thermometer_encode(Tensor({1, 1, 1}, {std::max(a, b)}), 10);
        for (std::size_t j = 0; j < 10; ++j) EXPECT_LE(ea[j], eb[j]);
        for (std::size_t j = 1; j < 10; ++j) EXPECT_LE(ea[j], ea[j - 1]);
    }
}

TEST(DefendedModel, PredictsThroughTransform) {
    CounterRng rng(5, "defended");
    const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 5, 5}, 3, 2);
    for (const TransformSpec& spec : {TransformSpec{"squeeze_bits", 3}, TransformSpec{"median_smooth", 3}}) {
        const DefendedModel defended(net, spec);
        EXPECT_FALSE(defended.white_box());
        EXPECT_NE(defended.info().name.find(net.info().name), std::string::npos);
        const Tensor batch = oracle::random_tensor({4, 1, 5, 5}, rng, 0, 1);
        EXPECT_EQ(defended.predict(batch), net.predict(apply_transform(spec, batch)));
        EXPECT_THROW(defended.input_gradient(batch, CrossEntropyLoss{{0, 0, 0, 0}}), CapabilityError);
    }
}

TEST(DefendedModel, SaveAndLoadKeepBehaviour) {
    CounterRng rng(6, "defended-io");
    const DefendedModel defended(NetworkModel::initialize(Architecture::Mlp, {1, 5, 5}, 3, 4),
                                 TransformSpec{"median_smooth", 3});
    const auto path = scratch("defended.advb");
    save_defended_model(defended, path);
    const auto loaded = load_any_model(path);
    EXPECT_EQ(loaded->info().name, defended.info().name);
    const Tensor batch = oracle::random_tensor({3, 1, 5, 5}, rng, 0, 1);
    EXPECT_EQ(loaded->predict(batch), defended.predict(batch));

    save_model(defended.network(), path);
    EXPECT_TRUE(load_any_model(path)->white_box());
}

TEST(DefendedModel, RejectsUnknownTransform) {
    const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 5, 5}, 3, 4);
    EXPECT_THROW(DefendedModel(net, TransformSpec{"sharpen", 1}), ValidationError);
    EXPECT_THROW(DefendedModel(net, TransformSpec{"squeeze_bits", 0}), ValidationError);
}

TEST(ThermometerModel, AcceptsRawInputs) {
    const auto data = generate_blobs(7, 60, 3, 6);
    TrainConfig cfg;
    cfg.epochs = 3;
    const auto model = train_thermometer_model(data, 3, 8, cfg);
    EXPECT_EQ(model.info().input_shape, (Shape{1, 6, 6}));
    EXPECT_EQ(model.network().info().input_shape, (Shape{8, 6, 6}));
    EXPECT_EQ(model.predict(data.images).shape(), (Shape{60, 3}));
    EXPECT_GT(accuracy(model, data.images, data.labels), 1.0 / 3.0);
}

TEST(AdversarialTraining, SubstitutesMixedShareOfEachBatch) {
    const auto data = generate_blobs(8, 40, 2, 6);
    const auto init = NetworkModel::initialize(Architecture::Logistic, {1, 6, 6}, 2, 3);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;  // batches of 16, 16, 8
    auto attack = DefenseConfig::pgd_training_attack();
    attack.iterations = 2;
    AdversarialTrainLog log;
    const auto a = adversarial_train(init, data, attack, 0.5, cfg, &log);
    EXPECT_EQ(log.substituted, 2u * (8 + 8 + 4));
    EXPECT_TRUE(log.failures.empty());
    EXPECT_EQ(log.train.epoch_losses.size(), 2u);

    AdversarialTrainLog again;
    EXPECT_EQ(adversarial_train(init, data, attack, 0.5, cfg, &again).parameters(), a.parameters());

    AdversarialTrainLog none;
    const auto clean = adversarial_train(init, data, attack, 0.0, cfg, &none);
    EXPECT_EQ(none.substituted, 0u);
    EXPECT_EQ(clean.parameters(), train(init, data, cfg).parameters());
}

TEST(DefenseConfig, ValidatesPerKind) {
    DefenseConfig cfg;
    cfg.kind = DefenseKind::FeatureSqueeze;
    cfg.bit_depth = 0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.kind = DefenseKind::SpatialSmooth;
    cfg.window = 4;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.kind = DefenseKind::LabelSmooth;
    cfg.alpha = 1.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    for (auto k : {DefenseKind::FeatureSqueeze, DefenseKind::SpatialSmooth, DefenseKind::LabelSmooth,
                   DefenseKind::GaussianAugment, DefenseKind::AdversarialTrain, DefenseKind::Thermometer})
        EXPECT_EQ(parse_defense(defense_name(k)), k);
}
