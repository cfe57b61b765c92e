#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "advbench/metrics.hpp"
#include "advbench/models.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

enum class AttackAlgorithm { Fgsm, Bim, Pgd, DeepFool, Jsma, Cw };

std::string algorithm_name(AttackAlgorithm algorithm);
AttackAlgorithm parse_algorithm(const std::string& name);
bool epsilon_parameterized(AttackAlgorithm algorithm);

struct AttackConfig {
    AttackAlgorithm algorithm = AttackAlgorithm::Fgsm;
    double epsilon = 0.3;
    double step_size = 0.05;
    std::size_t iterations = 10;
    PerturbationMetric metric = PerturbationMetric::linf();
    bool targeted = false;
    std::uint64_t seed = 0;

    double overshoot = 0.02;  // DeepFool

    double theta = 1.0;   // JSMA per-step increase
    double gamma = 0.25;  // JSMA fraction of elements allowed to change

    double confidence = 0.0;  // CW kappa
    std::size_t binary_search_steps = 9;
    std::size_t inner_steps = 1000;
    double initial_c = 1e-2;
    double cw_learning_rate = 1e-2;

    // Defaults for the algorithm, including its natural metric.
    static AttackConfig defaults(AttackAlgorithm algorithm);
    void validate() const;
};

// One attack attempt: the clean example O with label y, an optional target,
// and the outcome. `success` means predicted(candidate) != true_label
// (untargeted) or == target (targeted).
struct Adversary {
    Tensor original;
    int true_label = 0;
    std::optional<int> target;
    std::optional<Tensor> candidate;
    std::optional<int> predicted;  // label of the candidate
    bool success = false;
    std::size_t queries = 0;
    double distance = 0.0;
    std::optional<double> epsilon;  // budget of the returned candidate, if any

    static Adversary untargeted(Tensor original, int label);
    static Adversary targeted_at(Tensor original, int label, int target);

    bool criterion_met(int label) const;
};

// Observes every BIM/PGD iterate (after projection).
using IterateObserver = std::function<void(const Tensor&)>;

Adversary fgsm(const Model& model, const Adversary& adversary, const AttackConfig& cfg);
Adversary bim(const Model& model, const Adversary& adversary, const AttackConfig& cfg,
              const IterateObserver& observer = {});
Adversary pgd(const Model& model, const Adversary& adversary, const AttackConfig& cfg,
              const IterateObserver& observer = {});
Adversary deepfool(const Model& model, const Adversary& adversary, const AttackConfig& cfg);
Adversary jsma(const Model& model, const Adversary& adversary, const AttackConfig& cfg);
Adversary cw_l2(const Model& model, const Adversary& adversary, const AttackConfig& cfg);

Adversary run_attack(const Model& model, const Adversary& adversary, const AttackConfig& cfg);

struct EpsilonSearchResult {
    Adversary adversary;     // smallest successful budget found (or the last failure)
    double epsilon = 0.0;    // succeeded (when adversary.success)
    double failed_epsilon = 0.0;  // largest budget known to fail
};

// Minimum-budget search for FGSM/BIM/PGD: doubles from 1e-3 until the
// attack succeeds or the budget reaches the bounds diameter, then bisects
// the bracket 20 times.
EpsilonSearchResult epsilon_search(const Model& model, const Adversary& adversary,
                                   const AttackConfig& cfg);

inline constexpr double kEpsilonSearchStart = 1e-3;
inline constexpr int kEpsilonSearchBisections = 20;

// Moves `candidate` onto the closed LInf ball of radius eps around
// `original`, guaranteeing |candidate_i - original_i| <= eps in floating
// point.
void project_linf_ball(Tensor& candidate, const Tensor& original, double eps);

}  // namespace advbench
