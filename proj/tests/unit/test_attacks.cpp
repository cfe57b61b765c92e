#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "advbench/attacks.hpp"
#include "advbench/error.hpp"
#include "support/oracles.hpp"

using namespace advbench;

namespace {

// Counts model calls the way an attack should report them: one per predict
// call and one per example row of a gradient request.
class Tally final : public Model {
public:
    explicit Tally(const Model& inner) : inner_(inner) {}
    const ModelInfo& info() const override { return inner_.info(); }
    Tensor predict(const Tensor& batch) const override {
        ++calls;
        return inner_.predict(batch);
    }
    Tensor input_gradient(const Tensor& batch, const InputLoss& loss) const override {
        calls += batch.dim(0);
        return inner_.input_gradient(batch, loss);
    }
    mutable std::size_t calls = 0;

private:
    const Model& inner_;
};

class PredictOnly final : public Model {
public:
    explicit PredictOnly(const Model& inner) : inner_(inner), info_(inner.info()) {
        info_.capability = Capability::BlackBox;
    }
    const ModelInfo& info() const override { return info_; }
    Tensor predict(const Tensor& batch) const override { return inner_.predict(batch); }

private:
    const Model& inner_;
    ModelInfo info_;
};

// Two-class linear model on a flattened input with logit difference
// z0 - z1 = d . x + c.
NetworkModel binary_linear(const std::vector<double>& d, double c, Shape shape, Bounds bounds = {}) {
    Tensor w({d.size(), 2});
    for (std::size_t i = 0; i < d.size(); ++i) w[i * 2] = d[i];
    return oracle::logistic_model(w, Tensor::vector({c, 0.0}), std::move(shape), bounds);
}

double logit_gap(const std::vector<double>& d, double c, const Tensor& x) {
    double f = c;
    for (std::size_t i = 0; i < d.size(); ++i) f += d[i] * x[i];
    return f;
}

int label_of(const Model& m, const Tensor& x) { return predict_label(m, x); }

AttackConfig config(AttackAlgorithm a) { return AttackConfig::defaults(a); }

}  // namespace

TEST(Fgsm, LinearClosedForm) {
    // Untargeted FGSM on a linear model moves every coordinate by eps along
    // -sign(d) when the true class is 0.
    const std::vector<double> d{0.8, -0.3, 0.0, 1.5};
    const auto net = binary_linear(d, -0.2, {1, 2, 2});
    const Tensor x({1, 2, 2}, {0.5, 0.4, 0.6, 0.5});
    ASSERT_EQ(label_of(net, x), 0);
    auto cfg = config(AttackAlgorithm::Fgsm);
    cfg.epsilon = 0.1;
    const auto adv = fgsm(net, Adversary::untargeted(x, 0), cfg);
    const Tensor expect({1, 2, 2}, {0.4, 0.5, 0.6, 0.4});
    ASSERT_TRUE(adv.candidate);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR((*adv.candidate)[i], expect[i], 1e-15);
    EXPECT_NEAR(adv.distance, 0.1, 1e-15);
    EXPECT_EQ(adv.epsilon, 0.1);
    // Gap 0.58 drops by 0.1 * |d|_1 = 0.26 and stays positive.
    EXPECT_FALSE(adv.success);
    EXPECT_EQ(adv.predicted, 0);
}

TEST(Fgsm, ClipsToBounds) {
    const std::vector<double> d{1.0, -1.0};
    const auto net = binary_linear(d, 1.5, {1, 1, 2});
    const Tensor x({1, 1, 2}, {0.05, 0.97});
    ASSERT_EQ(label_of(net, x), 0);
    auto cfg = config(AttackAlgorithm::Fgsm);
    cfg.epsilon = 0.2;
    const auto adv = fgsm(net, Adversary::untargeted(x, 0), cfg);
    EXPECT_EQ(*adv.candidate, Tensor({1, 1, 2}, {0.0, 1.0}));
}

TEST(Fgsm, ZeroBudgetKeepsOriginal) {
    const auto net = binary_linear({1.0, -1.0}, 0.2, {1, 1, 2});
    const Tensor x({1, 1, 2}, {0.4, 0.3});
    auto cfg = config(AttackAlgorithm::Fgsm);
    cfg.epsilon = 0.0;
    const auto adv = fgsm(net, Adversary::untargeted(x, 0), cfg);
    EXPECT_EQ(*adv.candidate, x);
    EXPECT_FALSE(adv.success);
    cfg = config(AttackAlgorithm::Pgd);
    cfg.epsilon = 0.0;
    EXPECT_EQ(*pgd(net, Adversary::untargeted(x, 0), cfg).candidate, x);
}

TEST(Bim, SingleFullStepIsFgsm) {
    CounterRng rng(2, "bim-collapse");
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 3, 3}, 3, 40 + trial);
        const Tensor x = oracle::random_tensor({1, 3, 3}, rng, 0, 1);
        const int y = label_of(net, x);
        auto single = config(AttackAlgorithm::Fgsm);
        single.epsilon = 0.1;
        auto iterative = config(AttackAlgorithm::Bim);
        iterative.epsilon = 0.1;
        iterative.step_size = 0.1;
        iterative.iterations = 1;
        const auto a = fgsm(net, Adversary::untargeted(x, y), single);
        const auto b = bim(net, Adversary::untargeted(x, y), iterative);
        EXPECT_EQ(*a.candidate, *b.candidate) << trial;
        EXPECT_EQ(a.success, b.success) << trial;
    }
}

TEST(Fgsm, TargetedDescendsTowardTarget) {
    CounterRng rng(1, "fgsm-targeted");
    const Tensor w = oracle::random_tensor({4, 3}, rng);
    const auto net = oracle::logistic_model(w, Tensor::vector({0, 0, 0}), {1, 2, 2});
    const Tensor x = oracle::random_tensor({1, 2, 2}, rng, 0.3, 0.7);
    const int y = label_of(net, x);
    const int t = (y + 1) % 3;
    auto cfg = config(AttackAlgorithm::Fgsm);
    cfg.targeted = true;
    cfg.epsilon = 0.01;
    const auto adv = fgsm(net, Adversary::targeted_at(x, y, t), cfg);
    const Tensor g = net.input_gradient(batch_of_one(x), CrossEntropyLoss{{t}});
    for (std::size_t i = 0; i < 4; ++i) {
        const double s = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
        EXPECT_NEAR((*adv.candidate)[i], x[i] - 0.01 * s, 1e-15);
    }
}

TEST(EpsilonSearch, LinearMinimumBudget) {
    // The smallest LInf budget that flips a linear model is |f(x)| / |d|_1.
    const std::vector<double> d{0.8, -0.3, 0.25, 1.5};
    const double c = -0.9;
    const auto net = binary_linear(d, c, {1, 2, 2});
    const Tensor x({1, 2, 2}, {0.5, 0.4, 0.6, 0.5});
    const double gap = logit_gap(d, c, x);
    ASSERT_GT(gap, 0.0);
    const double expected = gap / (0.8 + 0.3 + 0.25 + 1.5);
    const auto cfg = config(AttackAlgorithm::Fgsm);
    const auto r = epsilon_search(net, Adversary::untargeted(x, 0), cfg);
    ASSERT_TRUE(r.adversary.success);
    EXPECT_GE(r.epsilon, expected * (1 - 1e-9));
    EXPECT_LE(r.epsilon - r.failed_epsilon, expected * 1e-5);
    EXPECT_LE(r.failed_epsilon, expected);
    EXPECT_NEAR(r.epsilon, expected, expected * 1e-5);
    EXPECT_EQ(r.adversary.epsilon, r.epsilon);
}

TEST(EpsilonSearch, CleanMisclassifiedNeedsNoBudget) {
    const auto net = binary_linear({1.0}, 0.0, {1, 1, 1});
    const auto r = epsilon_search(net, Adversary::untargeted(Tensor({1, 1, 1}, {0.5}), 1), config(AttackAlgorithm::Bim));
    EXPECT_TRUE(r.adversary.success);
    EXPECT_EQ(r.epsilon, 0.0);
}

TEST(EpsilonSearch, UnreachableReportsFailure) {
    // d . x + 5 > 0 everywhere in [0,1]^2.
    const auto net = binary_linear({1.0, 1.0}, 5.0, {1, 1, 2});
    const auto r =
        epsilon_search(net, Adversary::untargeted(Tensor({1, 1, 2}, {0.5, 0.5}), 0), config(AttackAlgorithm::Fgsm));
    EXPECT_FALSE(r.adversary.success);
    EXPECT_GE(r.failed_epsilon, 1.0);
}

TEST(EpsilonSearch, RejectsUnboundedAttacks) {
    const auto net = binary_linear({1.0}, 0.0, {1, 1, 1});
    EXPECT_THROW(epsilon_search(net, Adversary::untargeted(Tensor({1, 1, 1}, {0.5}), 0),
                                config(AttackAlgorithm::DeepFool)),
                 ValidationError);
}

TEST(DeepFool, LinearBinaryHitsHyperplaneWithOvershoot) {
    const std::vector<double> d{0.6, -0.8, 0.3};
    const double c = 0.2;
    const auto net = binary_linear(d, c, {1, 1, 3}, Bounds{-10, 10});
    const Tensor x({1, 1, 3}, {0.3, 0.1, 0.2});
    const double gap = logit_gap(d, c, x);
    ASSERT_GT(gap, 0.0);
    const double norm = std::sqrt(0.36 + 0.64 + 0.09);
    auto cfg = config(AttackAlgorithm::DeepFool);
    const auto adv = deepfool(net, Adversary::untargeted(x, 0), cfg);
    EXPECT_TRUE(adv.success);
    EXPECT_NEAR(adv.distance, (1 + cfg.overshoot) * gap / norm, 1e-12);
    // Direction is -d.
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_NEAR((*adv.candidate)[i] - x[i], -(1 + cfg.overshoot) * gap / (norm * norm) * d[i], 1e-12);
}

TEST(DeepFool, MulticlassLinearRespectsLowerBound) {
    // Any label change of an affine classifier needs at least
    // min_l |f_l| / |w_l| in L2.
    CounterRng rng(3, "deepfool-multi");
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor w = oracle::random_tensor({6, 4}, rng);
        const Tensor b = oracle::random_tensor({4}, rng, -0.2, 0.2);
        const auto net = oracle::logistic_model(w, b, {1, 2, 3}, Bounds{-20, 20});
        const Tensor x = oracle::random_tensor({1, 2, 3}, rng);
        const int y = label_of(net, x);
        const auto z = oracle::dense(x.data(), w, b);
        double bound = std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < 4; ++l) {
            if (static_cast<int>(l) == y) continue;
            double norm = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                const double diff = w[i * 4 + l] - w[i * 4 + static_cast<std::size_t>(y)];
                norm += diff * diff;
            }
            bound = std::min(bound, std::abs(z[l] - z[static_cast<std::size_t>(y)]) / std::sqrt(norm));
        }
        const auto adv = deepfool(net, Adversary::untargeted(x, y), config(AttackAlgorithm::DeepFool));
        ASSERT_TRUE(adv.success) << trial;
        EXPECT_GE(adv.distance, bound * (1 - 1e-9)) << trial;
    }
}

TEST(DeepFool, RefusesTargetedRuns) {
    const auto net = binary_linear({1.0}, 0.5, {1, 1, 1});
    auto cfg = config(AttackAlgorithm::DeepFool);
    cfg.targeted = true;
    EXPECT_THROW(deepfool(net, Adversary::targeted_at(Tensor({1, 1, 1}, {0.5}), 0, 1), cfg), UnsupportedError);
}

TEST(DeepFool, FlatModelIsDegenerate) {
    const auto net = binary_linear({0.0, 0.0}, 0.5, {1, 1, 2});
    EXPECT_THROW(deepfool(net, Adversary::untargeted(Tensor({1, 1, 2}, {0.5, 0.5}), 0),
                          config(AttackAlgorithm::DeepFool)),
                 DegenerateGradientError);
}

TEST(Jsma, FirstStepMatchesExhaustivePairSearch) {
    CounterRng rng(5, "jsma-pairs");
    int compared = 0;
    for (int trial = 0; compared < 60; ++trial) {
        ASSERT_LT(trial, 400);
        const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 3, 3}, 3, 200 + trial);
        Tensor x = oracle::random_tensor({1, 3, 3}, rng, 0.0, 0.9);
        if (trial % 3 == 0) x[rng.below(9)] = 1.0;  // a saturated element is never chosen
        const int y = label_of(net, x);
        const int t = (y + 1 + static_cast<int>(rng.below(2))) % 3;
        auto cfg = config(AttackAlgorithm::Jsma);
        cfg.iterations = 1;
        cfg.theta = 0.05;
        const auto adv = jsma(net, Adversary::targeted_at(x, y, t), cfg);

        const Tensor jac = net.input_gradient(stack(std::vector<Tensor>(3, x)),
                                              WeightedLogitLoss{Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})});
        std::vector<std::vector<double>> rows(3, std::vector<double>(9));
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t i = 0; i < 9; ++i) rows[j][i] = jac[j * 9 + i];
        const auto best = oracle::best_saliency_pair(rows, x, static_cast<std::size_t>(t), 1.0);

        std::vector<std::size_t> changed;
        for (std::size_t i = 0; i < 9; ++i)
            if ((*adv.candidate)[i] != x[i]) changed.push_back(i);
        if (!best) {
            EXPECT_TRUE(changed.empty()) << trial;
        } else {
            ASSERT_EQ(changed.size(), 2u) << trial;
            EXPECT_EQ(changed[0], best->p) << trial;
            EXPECT_EQ(changed[1], best->q) << trial;
            for (std::size_t i : changed) EXPECT_DOUBLE_EQ((*adv.candidate)[i], std::min(x[i] + 0.05, 1.0));
        }
        ++compared;
    }
}

TEST(Jsma, RespectsChangeBudget) {
    CounterRng rng(6, "jsma-budget");
    for (int trial = 0; trial < 30; ++trial) {
        const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 4, 4}, 4, 300 + trial);
        const Tensor x = oracle::random_tensor({1, 4, 4}, rng, 0.0, 0.5);
        const int y = label_of(net, x);
        auto cfg = config(AttackAlgorithm::Jsma);
        cfg.theta = 0.1;
        cfg.gamma = 0.25;
        const auto adv = jsma(net, Adversary::targeted_at(x, y, (y + 1) % 4), cfg);
        // Pairs are added while fewer than gamma * n elements differ, so the
        // count can overshoot by at most one pair.
        EXPECT_LE(adv.distance, 0.25 * 16 + 1) << trial;
        for (double v : adv.candidate->data()) EXPECT_LE(v, 1.0);
        for (std::size_t i = 0; i < 16; ++i) EXPECT_GE((*adv.candidate)[i], x[i]);
    }
}

TEST(Jsma, RequiresTarget) {
    const auto net = binary_linear({1.0}, 0.5, {1, 1, 1});
    auto cfg = config(AttackAlgorithm::Jsma);
    cfg.targeted = false;
    EXPECT_THROW(jsma(net, Adversary::untargeted(Tensor({1, 1, 1}, {0.5}), 0), cfg), UnsupportedError);
}

TEST(CarliniWagner, MatchesGridMinimumOnTwoPixels) {
    CounterRng rng(8, "cw-grid");
    for (int trial = 0; trial < 6; ++trial) {
        const Tensor w = oracle::random_tensor({2, 3}, rng, -3, 3);
        const Tensor b = oracle::random_tensor({3}, rng, -0.5, 0.5);
        const auto net = oracle::logistic_model(w, b, {1, 1, 2});
        const Tensor x = oracle::random_tensor({1, 1, 2}, rng, 0.2, 0.8);
        const int y = label_of(net, x);
        const std::optional<int> target = trial % 2 ? std::optional<int>((y + 1) % 3) : std::nullopt;
        auto cfg = config(AttackAlgorithm::Cw);
        cfg.inner_steps = 300;
        cfg.binary_search_steps = 8;
        cfg.cw_learning_rate = 5e-2;
        cfg.targeted = target.has_value();
        const auto request = target ? Adversary::targeted_at(x, y, *target) : Adversary::untargeted(x, y);
        const auto adv = cw_l2(net, request, cfg);
        const double grid = oracle::grid_min_l2(
            [&](double u, double v) {
                const double px[2] = {u, v};
                return oracle::dense(px, w, b);
            },
            x[0], x[1], y, target, 0.0);
        if (!std::isfinite(grid)) {
            EXPECT_FALSE(adv.success) << trial;
            continue;
        }
        ASSERT_TRUE(adv.success) << trial;
        // The grid overestimates the true minimum by at most one cell
        // diagonal; CW should land within a few hundredths of it.
        EXPECT_GE(adv.distance, grid - 0.005 * std::sqrt(2.0) - 1e-9) << trial;
        EXPECT_LE(adv.distance, grid + 0.02) << trial;
    }
}

TEST(CarliniWagner, ConfidenceWidensMargin) {
    const auto net = binary_linear({2.0, -1.0}, -0.3, {1, 1, 2});
    const Tensor x({1, 1, 2}, {0.6, 0.4});
    auto cfg = config(AttackAlgorithm::Cw);
    cfg.inner_steps = 300;
    cfg.cw_learning_rate = 5e-2;
    cfg.confidence = 0.5;
    const auto adv = cw_l2(net, Adversary::untargeted(x, 0), cfg);
    ASSERT_TRUE(adv.success);
    EXPECT_LE(logit_gap({2.0, -1.0}, -0.3, *adv.candidate), -0.5 + 1e-9);
}

TEST(AttackInvariants, CandidatesStayInBoundsAndBudget) {
    CounterRng rng(10, "invariants");
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 4, 4}, 3, 500 + trial);
        const Tensor x = oracle::random_tensor({1, 4, 4}, rng, 0, 1);
        const int y = label_of(net, x);
        for (auto algorithm : {AttackAlgorithm::Fgsm, AttackAlgorithm::Bim, AttackAlgorithm::Pgd,
                               AttackAlgorithm::DeepFool, AttackAlgorithm::Jsma, AttackAlgorithm::Cw}) {
            auto cfg = config(algorithm);
            cfg.epsilon = 0.15;
            cfg.seed = static_cast<std::uint64_t>(trial);
            cfg.inner_steps = 50;
            cfg.binary_search_steps = 3;
            const auto request = cfg.targeted ? Adversary::targeted_at(x, y, (y + 1) % 3) : Adversary::untargeted(x, y);
            Tally tally(net);
            const auto adv = run_attack(tally, request, cfg);
            const std::string where = algorithm_name(algorithm) + " trial " + std::to_string(trial);
            ASSERT_TRUE(adv.candidate) << where;
            EXPECT_EQ(adv.queries, tally.calls) << where;
            for (double v : adv.candidate->data()) {
                EXPECT_GE(v, 0.0) << where;
                EXPECT_LE(v, 1.0) << where;
            }
            const int predicted = label_of(net, *adv.candidate);
            EXPECT_EQ(adv.predicted, predicted) << where;
            EXPECT_EQ(adv.success, request.criterion_met(predicted)) << where;
            EXPECT_DOUBLE_EQ(adv.distance, distance(cfg.metric, x, *adv.candidate)) << where;
            if (epsilon_parameterized(algorithm)) {
                EXPECT_TRUE(within_budget(PerturbationMetric::linf(), x, *adv.candidate, 0.15)) << where;
            }
        }
    }
}

TEST(AttackInvariants, IteratesStayInsideBall) {
    CounterRng rng(11, "iterates");
    for (int trial = 0; trial < 10; ++trial) {
        const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 4, 4}, 3, 600 + trial);
        const Tensor x = oracle::random_tensor({1, 4, 4}, rng, 0, 1);
        const int y = label_of(net, x);
        auto cfg = config(AttackAlgorithm::Pgd);
        cfg.epsilon = 0.07;
        cfg.step_size = 0.03;
        cfg.seed = static_cast<std::uint64_t>(trial);
        std::size_t seen = 0;
        pgd(net, Adversary::untargeted(x, y), cfg, [&](const Tensor& it) {
            ++seen;
            EXPECT_TRUE(within_budget(PerturbationMetric::linf(), x, it, 0.07));
        });
        // A clean misclassification ends the run before any iterate.
        EXPECT_TRUE(seen == 0 || seen == cfg.iterations + 1);
    }
}

TEST(AttackInvariants, PgdIsDeterministicPerSeed) {
    const auto net = NetworkModel::initialize(Architecture::Mlp, {1, 4, 4}, 3, 1);
    CounterRng rng(12, "pgd-seed");
    const Tensor x = oracle::random_tensor({1, 4, 4}, rng, 0, 1);
    const int y = label_of(net, x);
    auto cfg = config(AttackAlgorithm::Pgd);
    cfg.iterations = 1;
    cfg.seed = 4;
    const auto a = pgd(net, Adversary::untargeted(x, y), cfg);
    const auto b = pgd(net, Adversary::untargeted(x, y), cfg);
    EXPECT_EQ(*a.candidate, *b.candidate);
    cfg.seed = 5;
    EXPECT_NE(*pgd(net, Adversary::untargeted(x, y), cfg).candidate, *a.candidate);
}

TEST(AttackInvariants, CleanMisclassificationReturnsOriginal) {
    const auto net = binary_linear({1.0}, 0.0, {1, 1, 1});
    const Tensor x({1, 1, 1}, {0.5});
    for (auto algorithm : {AttackAlgorithm::Fgsm, AttackAlgorithm::DeepFool, AttackAlgorithm::Cw}) {
        const auto adv = run_attack(net, Adversary::untargeted(x, 1), config(algorithm));
        EXPECT_TRUE(adv.success);
        EXPECT_EQ(adv.distance, 0.0);
        EXPECT_EQ(*adv.candidate, x);
        EXPECT_EQ(adv.queries, 1u);
    }
}

TEST(AttackValidation, RejectsInconsistentRequests) {
    const auto net = binary_linear({1.0}, 0.5, {1, 1, 1});
    const Tensor x({1, 1, 1}, {0.5});
    auto cfg = config(AttackAlgorithm::Fgsm);
    EXPECT_THROW(fgsm(net, Adversary::targeted_at(x, 0, 1), cfg), ValidationError);
    EXPECT_THROW(fgsm(net, Adversary::untargeted(x, 2), cfg), ValidationError);
    EXPECT_THROW(fgsm(net, Adversary::untargeted(Tensor({1, 1, 2}), 0), cfg), ShapeError);
    cfg.epsilon = -1;
    EXPECT_THROW(fgsm(net, Adversary::untargeted(x, 0), cfg), ValidationError);
    cfg = config(AttackAlgorithm::Fgsm);
    cfg.metric = PerturbationMetric::l2();
    EXPECT_THROW(fgsm(net, Adversary::untargeted(x, 0), cfg), ValidationError);
}

TEST(AttackValidation, GradientAttacksNeedWhiteBox) {
    const auto net = binary_linear({1.0}, 0.5, {1, 1, 1});
    const PredictOnly blind(net);
    const Tensor x({1, 1, 1}, {0.5});
    for (auto algorithm : {AttackAlgorithm::Fgsm, AttackAlgorithm::Bim, AttackAlgorithm::Pgd,
                           AttackAlgorithm::DeepFool, AttackAlgorithm::Cw}) {
        EXPECT_THROW(run_attack(blind, Adversary::untargeted(x, 0), config(algorithm)), CapabilityError);
    }
    EXPECT_THROW(run_attack(blind, Adversary::targeted_at(x, 0, 1), config(AttackAlgorithm::Jsma)), CapabilityError);
}

TEST(AttackValidation, NamesRoundTrip) {
    for (auto a : {AttackAlgorithm::Fgsm, AttackAlgorithm::Bim, AttackAlgorithm::Pgd, AttackAlgorithm::DeepFool,
                   AttackAlgorithm::Jsma, AttackAlgorithm::Cw})
        EXPECT_EQ(parse_algorithm(algorithm_name(a)), a);
    EXPECT_THROW(parse_algorithm("fgsn"), ValidationError);
}

TEST(LinfProjection, HoldsExactlyInFloatingPoint) {
    CounterRng rng(13, "projection");
    for (int trial = 0; trial < 2000; ++trial) {
        const double eps = rng.uniform(1e-6, 0.5);
        const Tensor o = oracle::random_tensor({8}, rng, -1e3, 1e3);
        Tensor c = o;
        for (double& v : c.data()) v += rng.uniform(-2 * eps, 2 * eps);
        project_linf_ball(c, o, eps);
        for (std::size_t i = 0; i < 8; ++i) ASSERT_LE(std::abs(c[i] - o[i]), eps);
    }
}
