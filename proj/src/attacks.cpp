#include "advbench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advbench/adam.hpp"
#include "advbench/error.hpp"
#include "advbench/rng.hpp"

namespace advbench {
namespace {

// Counts every predict and gradient call made on behalf of one attack run.
class CountingModel {
public:
    explicit CountingModel(const Model& model) : model_(model) {}

    const ModelInfo& info() const { return model_.info(); }

    Tensor logits(const Tensor& example) {
        ++queries_;
        return model_.predict(batch_of_one(example));
    }

    int label(const Tensor& example) { return argmax_rows(logits(example))[0]; }

    Tensor gradient(const Tensor& example, const InputLoss& loss) {
        ++queries_;
        Tensor g = model_.input_gradient(batch_of_one(example), loss);
        return g.reshaped(example.shape());
    }

    // Rows are d(logit_j)/d(input); computed in one batched backward pass and
    // counted as k gradient queries.
    std::vector<Tensor> jacobian(const Tensor& example) {
        const std::size_t k = info().num_classes;
        std::vector<Tensor> copies(k, example);
        Tensor weights({k, k});
        for (std::size_t j = 0; j < k; ++j) weights[j * k + j] = 1.0;
        queries_ += k;
        const Tensor g = model_.input_gradient(stack(copies), WeightedLogitLoss{weights});
        std::vector<Tensor> rows;
        rows.reserve(k);
        for (std::size_t j = 0; j < k; ++j) rows.push_back(g.row(j));
        return rows;
    }

    std::size_t queries() const { return queries_; }

private:
    const Model& model_;
    std::size_t queries_ = 0;
};

void require_white_box(const Model& model, AttackAlgorithm algorithm) {
    if (!model.white_box()) {
        throw CapabilityError(algorithm_name(algorithm) + " needs input gradients, but model '" +
                              model.info().name + "' is prediction-only");
    }
}

void require_metric(const AttackConfig& cfg, MetricKind kind) {
    if (cfg.metric.kind != kind) {
        throw ValidationError(algorithm_name(cfg.algorithm) + " measures perturbations with " +
                              metric_name(PerturbationMetric{kind, 2.0}) + ", got " +
                              metric_name(cfg.metric));
    }
}

void check_request(const Adversary& adv, const AttackConfig& cfg, const Model& model) {
    cfg.validate();
    if (cfg.targeted != adv.target.has_value()) {
        throw ValidationError(cfg.targeted ? "targeted attack requested without a target label"
                                           : "target label supplied to an untargeted attack");
    }
    const auto k = static_cast<int>(model.info().num_classes);
    if (adv.true_label < 0 || adv.true_label >= k) throw ValidationError("true label out of range");
    if (adv.target && (*adv.target < 0 || *adv.target >= k)) {
        throw ValidationError("target label out of range");
    }
    if (adv.original.shape() != model.info().input_shape) {
        throw ShapeError("original example shape " + shape_string(adv.original.shape()) +
                         " does not match model input " + shape_string(model.info().input_shape));
    }
}

// Fills in outcome fields for `candidate`.
Adversary finish(const Adversary& request, Tensor candidate, int predicted, CountingModel& model,
                 const PerturbationMetric& metric, std::optional<double> epsilon = std::nullopt) {
    Adversary out = request;
    out.predicted = predicted;
    out.success = request.criterion_met(predicted);
    out.distance = distance(metric, request.original, candidate);
    out.candidate = std::move(candidate);
    out.queries = model.queries();
    out.epsilon = epsilon;
    return out;
}

// Returns the finished record when the clean example already meets the
// success criterion.
std::optional<Adversary> already_adversarial(const Adversary& request, CountingModel& model,
                                             const PerturbationMetric& metric,
                                             std::optional<double> epsilon) {
    const int label = model.label(request.original);
    if (!request.criterion_met(label)) return std::nullopt;
    return finish(request, request.original, label, model, metric, epsilon);
}

void clip_bounds(Tensor& x, const Bounds& b) {
    for (double& v : x.data()) v = std::clamp(v, b.lower, b.upper);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// x + step * sign(grad), with the gradient direction reversed for targeted
// attacks (descending the loss toward the target).
void signed_step(Tensor& x, const Tensor& grad, double step, bool targeted) {
    const double direction = targeted ? -1.0 : 1.0;
    auto xd = x.data();
    auto gd = grad.data();
    for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += direction * step * sign(gd[i]);
}

CrossEntropyLoss ce_toward(const Adversary& adv) {
    return CrossEntropyLoss{{adv.target ? *adv.target : adv.true_label}};
}

// Shared BIM/PGD loop from `start`.
Adversary iterate_linf(CountingModel& model, const Adversary& request, const AttackConfig& cfg,
                       Tensor x, const IterateObserver& observer) {
    const Bounds bounds = model.info().bounds;
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const Tensor grad = model.gradient(x, ce_toward(request));
        signed_step(x, grad, cfg.step_size, cfg.targeted);
        clip_bounds(x, bounds);
        project_linf_ball(x, request.original, cfg.epsilon);
        if (observer) observer(x);
    }
    const int label = model.label(x);
    return finish(request, std::move(x), label, model, cfg.metric, cfg.epsilon);
}

}  // namespace

std::string algorithm_name(AttackAlgorithm algorithm) {
    switch (algorithm) {
        case AttackAlgorithm::Fgsm: return "fgsm";
        case AttackAlgorithm::Bim: return "bim";
        case AttackAlgorithm::Pgd: return "pgd";
        case AttackAlgorithm::DeepFool: return "deepfool";
        case AttackAlgorithm::Jsma: return "jsma";
        case AttackAlgorithm::Cw: return "cw";
    }
    return "unknown";
}

AttackAlgorithm parse_algorithm(const std::string& name) {
    if (name == "fgsm") return AttackAlgorithm::Fgsm;
    if (name == "bim") return AttackAlgorithm::Bim;
    if (name == "pgd") return AttackAlgorithm::Pgd;
    if (name == "deepfool") return AttackAlgorithm::DeepFool;
    if (name == "jsma") return AttackAlgorithm::Jsma;
    if (name == "cw") return AttackAlgorithm::Cw;
    throw ValidationError("unknown attack '" + name + "' (expected fgsm, bim, pgd, deepfool, jsma or cw)");
}

bool epsilon_parameterized(AttackAlgorithm algorithm) {
    return algorithm == AttackAlgorithm::Fgsm || algorithm == AttackAlgorithm::Bim ||
           algorithm == AttackAlgorithm::Pgd;
}

AttackConfig AttackConfig::defaults(AttackAlgorithm algorithm) {
    AttackConfig cfg;
    cfg.algorithm = algorithm;
    switch (algorithm) {
        case AttackAlgorithm::Fgsm:
        case AttackAlgorithm::Bim:
        case AttackAlgorithm::Pgd:
            cfg.metric = PerturbationMetric::linf();
            break;
        case AttackAlgorithm::DeepFool:
            cfg.metric = PerturbationMetric::l2();
            cfg.iterations = 50;
            break;
        case AttackAlgorithm::Jsma:
            cfg.metric = PerturbationMetric::l0();
            cfg.targeted = true;
            cfg.iterations = 100;
            break;
        case AttackAlgorithm::Cw:
            cfg.metric = PerturbationMetric::l2();
            break;
    }
    return cfg;
}

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("attack: epsilon must be >= 0");
    if (iterations < 1) throw ValidationError("attack: iterations must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("attack: step size must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("attack: JSMA gamma must be in (0, 1]");
    if (!(theta > 0.0)) throw ValidationError("attack: JSMA theta must be > 0");
    if (!(overshoot >= 0.0)) throw ValidationError("attack: DeepFool overshoot must be >= 0");
    if (!(confidence >= 0.0)) throw ValidationError("attack: CW confidence must be >= 0");
    if (binary_search_steps < 1 || inner_steps < 1) {
        throw ValidationError("attack: CW needs at least one binary-search and one inner step");
    }
    if (!(initial_c > 0.0) || !(cw_learning_rate > 0.0)) {
        throw ValidationError("attack: CW initial c and learning rate must be > 0");
    }
}

Adversary Adversary::untargeted(Tensor original, int label) {
    Adversary a;
    a.original = std::move(original);
    a.true_label = label;
    return a;
}

Adversary Adversary::targeted_at(Tensor original, int label, int target) {
    Adversary a = untargeted(std::move(original), label);
    a.target = target;
    return a;
}

bool Adversary::criterion_met(int label) const {
    return target ? label == *target : label != true_label;
}

void project_linf_ball(Tensor& candidate, const Tensor& original, double eps) {
    auto c = candidate.data();
    auto o = original.data();
    for (std::size_t i = 0; i < c.size(); ++i) {
        double v = std::clamp(c[i], o[i] - eps, o[i] + eps);
        // o +/- eps can round outward; step back until the difference fits.
        while (std::abs(v - o[i]) > eps) v = std::nextafter(v, o[i]);
        c[i] = v;
    }
}

Adversary fgsm(const Model& model, const Adversary& adversary, const AttackConfig& cfg) {
    require_white_box(model, AttackAlgorithm::Fgsm);
    require_metric(cfg, MetricKind::LInf);
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, 0.0)) return *done;

    Tensor x = adversary.original;
    const Tensor grad = counted.gradient(x, ce_toward(adversary));
    signed_step(x, grad, cfg.epsilon, cfg.targeted);
    clip_bounds(x, model.info().bounds);
    project_linf_ball(x, adversary.original, cfg.epsilon);
    const int label = counted.label(x);
    return finish(adversary, std::move(x), label, counted, cfg.metric, cfg.epsilon);
}

Adversary bim(const Model& model, const Adversary& adversary, const AttackConfig& cfg,
              const IterateObserver& observer) {
    require_white_box(model, AttackAlgorithm::Bim);
    require_metric(cfg, MetricKind::LInf);
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, 0.0)) return *done;
    return iterate_linf(counted, adversary, cfg, adversary.original, observer);
}

Adversary pgd(const Model& model, const Adversary& adversary, const AttackConfig& cfg,
              const IterateObserver& observer) {
    require_white_box(model, AttackAlgorithm::Pgd);
    require_metric(cfg, MetricKind::LInf);
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, 0.0)) return *done;

    Tensor start = adversary.original;
    CounterRng rng(cfg.seed, "pgd/start");
    for (double& v : start.data()) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
    clip_bounds(start, model.info().bounds);
    project_linf_ball(start, adversary.original, cfg.epsilon);
    if (observer) observer(start);
    return iterate_linf(counted, adversary, cfg, std::move(start), observer);
}

Adversary deepfool(const Model& model, const Adversary& adversary, const AttackConfig& cfg) {
    require_white_box(model, AttackAlgorithm::DeepFool);
    require_metric(cfg, MetricKind::L2);
    if (cfg.targeted || adversary.target) {
        throw UnsupportedError("deepfool is untargeted only");
    }
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, std::nullopt)) return *done;

    const Bounds bounds = model.info().bounds;
    const std::size_t k = model.info().num_classes;
    const auto y = static_cast<std::size_t>(adversary.true_label);
    const Tensor& original = adversary.original;
    Tensor total(original.shape());
    Tensor candidate = original;
    int label = adversary.true_label;

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Tensor x = original;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += total[i];
        clip_bounds(x, bounds);

        const Tensor logits = counted.logits(x);
        const auto jac = counted.jacobian(x);

        std::size_t best = k;
        double best_ratio = std::numeric_limits<double>::infinity();
        double best_norm = 0.0;
        double best_gap = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            if (l == y) continue;
            double norm2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double w = jac[l][i] - jac[y][i];
                norm2 += w * w;
            }
            const double norm = std::sqrt(norm2);
            const double gap = logits[l] - logits[y];
            const double ratio = norm < 1e-12 ? std::numeric_limits<double>::infinity()
                                              : std::abs(gap) / norm;
            if (best == k || ratio < best_ratio) {
                best = l;
                best_ratio = ratio;
                best_norm = norm;
                best_gap = gap;
            }
        }
        if (best_norm < 1e-12) {
            throw DegenerateGradientError("deepfool: logit-difference gradient vanished at iteration " +
                                          std::to_string(it + 1));
        }
        const double scale = std::abs(best_gap) / (best_norm * best_norm);
        for (std::size_t i = 0; i < x.size(); ++i) total[i] += scale * (jac[best][i] - jac[y][i]);

        candidate = original;
        for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += (1.0 + cfg.overshoot) * total[i];
        clip_bounds(candidate, bounds);
        label = counted.label(candidate);
        if (adversary.criterion_met(label)) break;
    }
    return finish(adversary, std::move(candidate), label, counted, cfg.metric);
}

Adversary jsma(const Model& model, const Adversary& adversary, const AttackConfig& cfg) {
    require_white_box(model, AttackAlgorithm::Jsma);
    require_metric(cfg, MetricKind::L0);
    if (!cfg.targeted || !adversary.target) throw UnsupportedError("jsma requires a target label");
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, std::nullopt)) return *done;

    const double upper = model.info().bounds.upper;
    const auto t = static_cast<std::size_t>(*adversary.target);
    const std::size_t k = model.info().num_classes;
    const Tensor& original = adversary.original;
    const std::size_t n = original.size();
    const double budget = cfg.gamma * static_cast<double>(n);

    Tensor x = original;
    int label = adversary.true_label;
    std::vector<double> toward(n), others(n);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        if (distance(PerturbationMetric::l0(), x, original) >= budget) break;

        const auto jac = counted.jacobian(x);
        for (std::size_t p = 0; p < n; ++p) {
            double all = 0.0;
            for (std::size_t j = 0; j < k; ++j) all += jac[j][p];
            toward[p] = jac[t][p];
            others[p] = all - jac[t][p];
        }

        double best_score = 0.0;
        std::size_t best_p = n, best_q = n;
        for (std::size_t p = 0; p < n; ++p) {
            if (x[p] >= upper) continue;
            for (std::size_t q = p + 1; q < n; ++q) {
                if (x[q] >= upper) continue;
                const double alpha = toward[p] + toward[q];
                const double beta = others[p] + others[q];
                if (alpha <= 0.0 || beta >= 0.0) continue;
                const double score = alpha * std::abs(beta);
                if (score > best_score) {
                    best_score = score;
                    best_p = p;
                    best_q = q;
                }
            }
        }
        if (best_p == n) break;  // saliency map is empty

        x[best_p] = std::min(x[best_p] + cfg.theta, upper);
        x[best_q] = std::min(x[best_q] + cfg.theta, upper);
        label = counted.label(x);
        if (adversary.criterion_met(label)) break;
    }
    return finish(adversary, std::move(x), label, counted, cfg.metric);
}

Adversary cw_l2(const Model& model, const Adversary& adversary, const AttackConfig& cfg) {
    require_white_box(model, AttackAlgorithm::Cw);
    require_metric(cfg, MetricKind::L2);
    check_request(adversary, cfg, model);
    CountingModel counted(model);
    if (auto done = already_adversarial(adversary, counted, cfg.metric, std::nullopt)) return *done;

    // Keeps tanh(w) strictly inside (-1, 1) in double precision.
    constexpr double kMaxW = 10.0;
    constexpr double kUpperC = 1e10;

    const Bounds bounds = model.info().bounds;
    const double half = bounds.diameter() / 2.0;
    const std::size_t k = model.info().num_classes;
    const Tensor& original = adversary.original;
    const std::size_t n = original.size();
    const auto anchor = static_cast<std::size_t>(adversary.target ? *adversary.target : adversary.true_label);

    auto to_input = [&](const Tensor& w) {
        Tensor x(w.shape());
        for (std::size_t i = 0; i < n; ++i) x[i] = bounds.lower + half * (std::tanh(w[i]) + 1.0);
        return x;
    };

    Tensor w0(original.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double z = (original[i] - bounds.lower) / half - 1.0;
        w0[i] = std::atanh(std::clamp(z, -1.0, 1.0) * (1.0 - 1e-6));
    }

    double c = cfg.initial_c;
    double c_low = 0.0;
    double c_high = kUpperC;
    std::optional<Tensor> best;
    double best_l2 = std::numeric_limits<double>::infinity();
    int best_label = adversary.true_label;
    Tensor last = to_input(w0);
    int last_label = adversary.true_label;

    for (std::size_t outer = 0; outer < cfg.binary_search_steps; ++outer) {
        TensorMap state{{"w", w0}};
        AdamState adam(AdamConfig{.learning_rate = cfg.cw_learning_rate});
        bool found = false;

        for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
            const Tensor& w = state.at("w");
            const Tensor x = to_input(w);
            const Tensor logits = counted.logits(x);

            std::size_t rival = anchor == 0 ? 1 : 0;
            for (std::size_t j = 0; j < k; ++j)
                if (j != anchor && logits[j] > logits[rival]) rival = j;
            // Targeted: max_{i!=t} Z_i - Z_t. Untargeted: Z_y - max_{i!=y} Z_i.
            const double margin = adversary.target ? logits[rival] - logits[anchor]
                                                   : logits[anchor] - logits[rival];
            double l2sq = 0.0;
            for (std::size_t i = 0; i < n; ++i) l2sq += (x[i] - original[i]) * (x[i] - original[i]);
            const double loss = l2sq + c * std::max(margin, -cfg.confidence);
            if (!std::isfinite(loss)) {
                throw OverflowError("cw: non-finite loss at binary step " + std::to_string(outer + 1) +
                                    ", inner step " + std::to_string(step + 1) + " (c=" +
                                    std::to_string(c) + ")");
            }

            const int label = argmax_rows(logits)[0];
            last = x;
            last_label = label;
            if (adversary.criterion_met(label) && -margin >= cfg.confidence) {
                found = true;
                const double l2 = std::sqrt(l2sq);
                if (l2 < best_l2) {
                    best_l2 = l2;
                    best = x;
                    best_label = label;
                }
            }

            Tensor grad_x(x.shape());
            for (std::size_t i = 0; i < n; ++i) grad_x[i] = 2.0 * (x[i] - original[i]);
            if (margin > -cfg.confidence) {
                Tensor weights({1, k});
                const double sign_rival = adversary.target ? 1.0 : -1.0;
                weights[rival] = sign_rival;
                weights[anchor] = -sign_rival;
                const Tensor gm = counted.gradient(x, WeightedLogitLoss{weights});
                for (std::size_t i = 0; i < n; ++i) grad_x[i] += c * gm[i];
            }
            Tensor grad_w(w.shape());
            for (std::size_t i = 0; i < n; ++i) {
                const double th = std::tanh(w[i]);
                grad_w[i] = grad_x[i] * half * (1.0 - th * th);
            }
            adam.step(state, TensorMap{{"w", std::move(grad_w)}});
            for (double& v : state.at("w").data()) v = std::clamp(v, -kMaxW, kMaxW);
        }

        if (found) {
            c_high = std::min(c_high, c);
            c = (c_low + c_high) / 2.0;
        } else {
            c_low = std::max(c_low, c);
            c = c_high < kUpperC ? (c_low + c_high) / 2.0 : c * 10.0;
        }
    }

    if (best) return finish(adversary, std::move(*best), best_label, counted, cfg.metric);
    return finish(adversary, std::move(last), last_label, counted, cfg.metric);
}

Adversary run_attack(const Model& model, const Adversary& adversary, const AttackConfig& cfg) {
    switch (cfg.algorithm) {
        case AttackAlgorithm::Fgsm: return fgsm(model, adversary, cfg);
        case AttackAlgorithm::Bim: return bim(model, adversary, cfg);
        case AttackAlgorithm::Pgd: return pgd(model, adversary, cfg);
        case AttackAlgorithm::DeepFool: return deepfool(model, adversary, cfg);
        case AttackAlgorithm::Jsma: return jsma(model, adversary, cfg);
        case AttackAlgorithm::Cw: return cw_l2(model, adversary, cfg);
    }
    throw ValidationError("unknown attack algorithm");
}

EpsilonSearchResult epsilon_search(const Model& model, const Adversary& adversary,
                                   const AttackConfig& cfg) {
    if (!epsilon_parameterized(cfg.algorithm)) {
        throw ValidationError("epsilon search supports fgsm, bim and pgd, not " +
                              algorithm_name(cfg.algorithm));
    }
    require_white_box(model, cfg.algorithm);
    require_metric(cfg, MetricKind::LInf);
    check_request(adversary, cfg, model);

    std::size_t queries = 0;
    auto attempt = [&](double eps) {
        AttackConfig c = cfg;
        c.epsilon = eps;
        Adversary a = run_attack(model, adversary, c);
        queries += a.queries;
        a.queries = queries;
        return a;
    };

    Adversary at_zero = attempt(0.0);
    if (at_zero.success) return {at_zero, 0.0, 0.0};

    const double diameter = model.info().bounds.diameter();
    double low = 0.0;
    double eps = std::min(kEpsilonSearchStart, diameter);
    Adversary best;
    while (true) {
        Adversary a = attempt(eps);
        if (a.success) {
            best = std::move(a);
            break;
        }
        low = eps;
        if (eps >= diameter) return {std::move(a), 0.0, low};
        eps = std::min(2.0 * eps, diameter);
    }

    double high = eps;
    for (int i = 0; i < kEpsilonSearchBisections; ++i) {
        const double mid = 0.5 * (low + high);
        Adversary a = attempt(mid);
        if (a.success) {
            high = mid;
            best = std::move(a);
        } else {
            low = mid;
        }
    }
    best.queries = queries;
    return {std::move(best), high, low};
}

}  // namespace advbench
