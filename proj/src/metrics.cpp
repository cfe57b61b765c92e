#include "advbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advbench/error.hpp"

namespace advbench {

PerturbationMetric PerturbationMetric::lp(double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) {
        throw ValidationError("Lp metric requires finite p >= 1");
    }
    return {MetricKind::Lp, p};
}

std::string metric_name(const PerturbationMetric& metric) {
    switch (metric.kind) {
        case MetricKind::L0: return "l0";
        case MetricKind::L2: return "l2";
        case MetricKind::LInf: return "linf";
        case MetricKind::Lp: {
            std::ostringstream os;
            os << "l" << metric.p;
            return os.str();
        }
    }
    return "unknown";
}

PerturbationMetric parse_metric(const std::string& name) {
    if (name == "l0") return PerturbationMetric::l0();
    if (name == "l2") return PerturbationMetric::l2();
    if (name == "linf") return PerturbationMetric::linf();
    if (name.size() > 1 && name[0] == 'l') {
        try {
            std::size_t used = 0;
            const double p = std::stod(name.substr(1), &used);
            if (used == name.size() - 1) return PerturbationMetric::lp(p);
        } catch (const std::logic_error&) {
        }
    }
    throw ValidationError("unknown perturbation metric '" + name + "'");
}

double distance(const PerturbationMetric& metric, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("distance: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
    const auto x = a.data();
    const auto y = b.data();
    switch (metric.kind) {
        case MetricKind::L0: {
            std::size_t count = 0;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(x[i] - y[i]) > kL0Tolerance) ++count;
            return static_cast<double>(count);
        }
        case MetricKind::L2: {
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double d = x[i] - y[i];
                acc += d * d;
            }
            return std::sqrt(acc);
        }
        case MetricKind::LInf: {
            double m = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
            return m;
        }
        case MetricKind::Lp: {
            if (!(metric.p >= 1.0)) throw ValidationError("Lp metric requires p >= 1");
            // Scaling by the largest magnitude keeps large p from overflowing.
            double scale = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) scale = std::max(scale, std::abs(x[i] - y[i]));
            if (scale == 0.0) return 0.0;
            double acc = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i)
                acc += std::pow(std::abs(x[i] - y[i]) / scale, metric.p);
            return scale * std::pow(acc, 1.0 / metric.p);
        }
    }
    return 0.0;
}

bool within_budget(const PerturbationMetric& metric, const Tensor& a, const Tensor& b,
                   double epsilon) {
    if (!(epsilon >= 0.0)) throw ValidationError("budget epsilon must be >= 0");
    return distance(metric, a, b) <= epsilon;
}

}  // namespace advbench
