#pragma once

#include <string>

#include "advbench/tensor.hpp"

namespace advbench {

// Elements whose absolute difference does not exceed this count as unchanged
// under L0.
inline constexpr double kL0Tolerance = 1e-12;

enum class MetricKind { L0, L2, LInf, Lp };

struct PerturbationMetric {
    MetricKind kind = MetricKind::L2;
    double p = 2.0;  // used by Lp only; must be >= 1

    static PerturbationMetric l0() { return {MetricKind::L0, 0.0}; }
    static PerturbationMetric l2() { return {MetricKind::L2, 2.0}; }
    static PerturbationMetric linf() { return {MetricKind::LInf, 0.0}; }
    static PerturbationMetric lp(double p);

    friend bool operator==(const PerturbationMetric&, const PerturbationMetric&) = default;
};

std::string metric_name(const PerturbationMetric& metric);
PerturbationMetric parse_metric(const std::string& name);

// Distance between equally shaped tensors, counted element-wise over the
// whole tensor (channels included).
double distance(const PerturbationMetric& metric, const Tensor& a, const Tensor& b);

// Closed ball: distance(a, b) <= epsilon.
bool within_budget(const PerturbationMetric& metric, const Tensor& a, const Tensor& b,
                   double epsilon);

}  // namespace advbench
