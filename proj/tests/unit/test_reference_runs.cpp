// Pinned-seed runs of the reference blobs setup. The frozen numbers were
// recorded from these exact configurations; a change in any of them means
// training, attack or corruption behaviour moved.

#include <gtest/gtest.h>

#include <cmath>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/defenses.hpp"
#include "advbench/perception.hpp"
#include "support/reference_blobs.hpp"

using namespace advbench;

namespace {

using Reference = oracle::ReferenceBlobs;
using oracle::attacked_accuracy;

const Reference& reference() {
    static const Reference r;
    return r;
}

const NetworkModel& plain_model() {
    static const NetworkModel m = train(reference().init, reference().train_set, reference().cfg);
    return m;
}

}  // namespace

TEST(ReferenceRun, MlpGeneralisesToHeldOutBlobs) {
    const auto& r = reference();
    EXPECT_EQ(accuracy(plain_model(), r.held_out.images, r.held_out.labels), 1.0);
}

TEST(ReferenceRun, SecondEpochLowersLoss) {
    const auto& r = reference();
    TrainLog log;
    train(r.init, r.train_set, r.cfg, &log);
    ASSERT_EQ(log.epoch_losses.size(), 5u);
    EXPECT_NEAR(log.epoch_losses[0], 0.35992099259144761, 1e-12);
    EXPECT_NEAR(log.epoch_losses[1], 0.00037499850489078779, 1e-12);
    EXPECT_LT(log.epoch_losses[1], log.epoch_losses[0]);
}

TEST(ReferenceRun, OneEpochSeparatesTwoClasses) {
    const auto two = generate_blobs(3, 400, 2, 8);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 4;
    const auto m = train(NetworkModel::initialize(Architecture::Mlp, {1, 8, 8}, 2, 9), two, cfg);
    EXPECT_EQ(accuracy(m, two.images, two.labels), 1.0);
}

TEST(ReferenceRun, AdversarialTrainingResistsPgd) {
    const auto& r = reference();
    AdversarialTrainLog log;
    const auto hardened =
        adversarial_train(r.init, r.train_set, DefenseConfig::pgd_training_attack(), 0.5, r.cfg, &log);
    EXPECT_TRUE(log.failures.empty());
    auto attack = DefenseConfig::pgd_training_attack();
    attack.seed = oracle::kPgdEvaluationSeed;
    const double plain_pgd = attacked_accuracy(plain_model(), r.held_out, attack);
    const double hardened_pgd = attacked_accuracy(hardened, r.held_out, attack);
    EXPECT_DOUBLE_EQ(plain_pgd, oracle::kPlainPgdAccuracy);
    EXPECT_DOUBLE_EQ(hardened_pgd, oracle::kHardenedPgdAccuracy);
    EXPECT_GT(hardened_pgd, plain_pgd);

    const double plain_clean = accuracy(plain_model(), r.held_out.images, r.held_out.labels);
    const double hardened_clean = accuracy(hardened, r.held_out.images, r.held_out.labels);
    EXPECT_DOUBLE_EQ(plain_clean, oracle::kPlainCleanAccuracy);
    EXPECT_DOUBLE_EQ(hardened_clean, oracle::kHardenedCleanAccuracy);
    EXPECT_GE(hardened_clean, 0.8 * plain_clean);
}

TEST(ReferenceRun, IterativeAttackAtLeastMatchesSingleStep) {
    const auto& r = reference();
    auto single = AttackConfig::defaults(AttackAlgorithm::Fgsm);
    single.epsilon = 0.3;
    auto iterative = AttackConfig::defaults(AttackAlgorithm::Bim);
    iterative.epsilon = 0.3;
    iterative.step_size = 0.05;
    iterative.iterations = 10;
    const double fgsm_rate = 1.0 - attacked_accuracy(plain_model(), r.held_out, single);
    const double bim_rate = 1.0 - attacked_accuracy(plain_model(), r.held_out, iterative);
    EXPECT_DOUBLE_EQ(fgsm_rate, 1.0);
    EXPECT_DOUBLE_EQ(bim_rate, 1.0);
    EXPECT_GE(bim_rate, fgsm_rate);
}

TEST(ReferenceRun, NoiseAugmentationRaisesMedianNoiseSeverity) {
    const auto& r = reference();
    const auto augmented = train(r.init, gaussian_augment(r.train_set, 0.1, 1.0, 13), r.cfg);
    const CorruptionKind kinds[] = {CorruptionKind::GaussianNoise};
    ReportOptions opts;
    opts.seed = 17;
    // The default noise grid stops at 0.5, below where either model fails.
    std::vector<double> grid;
    for (int i = 1; i <= 25; ++i) grid.push_back(0.1 * i);
    opts.grids[CorruptionKind::GaussianNoise] = grid;
    const auto subset = r.held_out.slice(0, 100);
    const double plain = robustness_report(plain_model(), subset, kinds, opts).corruptions[0].median_severity;
    const double noisy = robustness_report(augmented, subset, kinds, opts).corruptions[0].median_severity;
    EXPECT_NEAR(plain, 1.3695312500000001, 1e-12);
    EXPECT_NEAR(noisy, 1.5799804687500001, 1e-12);
    EXPECT_GE(noisy, plain);
}

TEST(GaussianAugment, NoiseMomentsOnMidRangePixels) {
    // Constant 0.5 images keep every draw clear of the clip region.
    const std::size_t n = 1563;  // 1563 * 64 >= 1e5 appended pixels
    const Dataset flat{Tensor::filled({n, 1, 8, 8}, 0.5), std::vector<int>(n, 0)};
    const auto aug = gaussian_augment(flat, 0.05, 1.0, 21);
    ASSERT_EQ(aug.size(), 2 * n);
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = n; i < aug.size(); ++i) {
        const Tensor im = aug.image(i);
        for (double v : im.data()) {
            sum += v - 0.5;
            sq += (v - 0.5) * (v - 0.5);
            ++count;
        }
    }
    ASSERT_GE(count, 100000u);
    const double mean = sum / static_cast<double>(count);
    const double sd = std::sqrt(sq / static_cast<double>(count) - mean * mean);
    EXPECT_NEAR(mean, -0.00033601261967334601, 1e-12);
    EXPECT_NEAR(sd, 0.049816380733302017, 1e-12);
    EXPECT_LT(std::abs(mean), 0.01);
    EXPECT_LT(std::abs(sd - 0.05), 0.05 * 0.05);
}

TEST(Corrupt, FullTurnRestoresSymmetricImage) {
    Tensor x({1, 9, 9});
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) x[static_cast<std::size_t>(r * 9 + c)] = std::exp(-((r - 4) * (r - 4) + (c - 4) * (c - 4)) / 8.0);
    const Tensor turned = corrupt(x, Corruption{CorruptionKind::Rotation, 360.0, 0});
    for (std::size_t r = 1; r < 8; ++r)
        for (std::size_t c = 1; c < 8; ++c) EXPECT_LT(std::abs(turned[r * 9 + c] - x[r * 9 + c]), 1e-6);
}
