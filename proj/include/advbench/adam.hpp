#pragma once

#include <cstdint>

#include "advbench/tensor.hpp"

namespace advbench {

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam moments. Moments are created lazily (zero) the first
// time a parameter name receives a gradient.
class AdamState {
public:
    AdamState() : AdamState(AdamConfig{}) {}
    explicit AdamState(AdamConfig config);

    const AdamConfig& config() const noexcept { return config_; }
    std::uint64_t step_count() const noexcept { return steps_; }
    const TensorMap& first_moment() const noexcept { return m_; }
    const TensorMap& second_moment() const noexcept { return v_; }

    // Applies one update in place. Gradient names must name parameters;
    // parameters without a gradient are left untouched.
    void step(TensorMap& parameters, const TensorMap& gradients);

private:
    AdamConfig config_;
    std::uint64_t steps_ = 0;
    TensorMap m_;
    TensorMap v_;
};

// Value-returning form: updated parameters, `state` advanced by one step.
TensorMap adam_step(AdamState& state, const TensorMap& gradients, TensorMap parameters);

}  // namespace advbench
