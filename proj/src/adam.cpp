#include "advbench/adam.hpp"

#include <cmath>

#include "advbench/error.hpp"

namespace advbench {

AdamState::AdamState(AdamConfig config) : config_(config) {
    if (!(config_.learning_rate > 0.0)) throw ValidationError("adam: learning rate must be > 0");
    if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0)) throw ValidationError("adam: beta1 must be in [0,1)");
    if (!(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) throw ValidationError("adam: beta2 must be in [0,1)");
    if (!(config_.epsilon > 0.0)) throw ValidationError("adam: epsilon must be > 0");
}

void AdamState::step(TensorMap& parameters, const TensorMap& gradients) {
    for (const auto& [name, g] : gradients) {
        auto it = parameters.find(name);
        if (it == parameters.end()) {
            throw ValidationError("adam: gradient for unknown parameter '" + name + "'");
        }
        if (it->second.shape() != g.shape()) {
            throw ShapeError("adam: gradient shape " + shape_string(g.shape()) +
                             " does not match parameter '" + name + "' of shape " +
                             shape_string(it->second.shape()));
        }
    }

    ++steps_;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);

    for (const auto& [name, g] : gradients) {
        Tensor& p = parameters.find(name)->second;
        auto [mit, m_new] = m_.try_emplace(name, Tensor(g.shape()));
        auto [vit, v_new] = v_.try_emplace(name, Tensor(g.shape()));
        auto m = mit->second.data();
        auto v = vit->second.data();
        auto pd = p.data();
        auto gd = g.data();
        for (std::size_t i = 0; i < gd.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gd[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gd[i] * gd[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            pd[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
        }
        if (!p.all_finite()) throw OverflowError("adam: parameter '" + name + "' became non-finite");
    }
}

TensorMap adam_step(AdamState& state, const TensorMap& gradients, TensorMap parameters) {
    state.step(parameters, gradients);
    return parameters;
}

}  // namespace advbench
