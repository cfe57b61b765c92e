#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/models.hpp"

namespace advbench {

enum class CorruptionKind { GaussianNoise, UniformNoise, PepperNoise, GaussianBlur, Brightness, Rotation, Fog };

inline constexpr CorruptionKind kAllCorruptions[] = {
    CorruptionKind::GaussianNoise, CorruptionKind::UniformNoise, CorruptionKind::PepperNoise,
    CorruptionKind::GaussianBlur,  CorruptionKind::Brightness,   CorruptionKind::Rotation,
    CorruptionKind::Fog,
};

std::string corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption(const std::string& name);
bool stochastic(CorruptionKind kind);

struct Corruption {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    double severity = 0.0;
    std::uint64_t seed = 0;
};

// Severity meaning per kind:
//   gaussian_noise  + severity * N(0,1)
//   uniform_noise   + Uniform(-severity, severity)
//   pepper_noise    floor(severity * n) elements set to the lower bound
//   gaussian_blur   Gaussian kernel with std severity, size 2*ceil(3*severity)+1
//   brightness      + severity
//   rotation        severity degrees about the image centre, bilinear
//   fog             t*x + (1-t)*upper with t = exp(-severity)
// Noise draws depend only on (seed, kind), so one seed gives nested
// corruptions as severity grows. Severity 0 returns the input unchanged.
// Accepts (c,h,w) or (n,c,h,w); results are clipped to bounds.
Tensor corrupt(const Tensor& x, const Corruption& c, Bounds bounds = {});

// Blur kernel used by gaussian_blur (normalised to sum 1).
std::vector<double> gaussian_kernel(double sigma);

// 25 evenly spaced severities per kind.
std::vector<double> default_grid(CorruptionKind kind);

struct SeveritySearch {
    std::optional<double> severity;  // first failing severity after refinement
    double passing = 0.0;            // largest severity known to pass
    double max_tested = 0.0;
    std::size_t queries = 0;

    friend bool operator==(const SeveritySearch&, const SeveritySearch&) = default;
};

inline constexpr int kSeverityBisections = 10;

// Scans `grid` in order and bisects between the last passing and the first
// failing point. Throws CleanMisclassifiedError when the clean example is
// not predicted as `label`.
SeveritySearch min_failing_severity(const Model& model, const Tensor& example, int label, CorruptionKind kind,
                                    std::span<const double> grid, std::uint64_t seed);

struct ExampleSeverity {
    std::size_t index = 0;
    SeveritySearch search;

    friend bool operator==(const ExampleSeverity&, const ExampleSeverity&) = default;
};

struct CurvePoint {
    double severity = 0.0;
    double accuracy = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct CorruptionReport {
    CorruptionKind kind = CorruptionKind::GaussianNoise;
    std::vector<double> grid;
    std::vector<ExampleSeverity> examples;
    std::vector<CurvePoint> curve;  // severity 0 first, then the grid
    double median_severity = 0.0;   // +inf when at least half the examples never fail
    std::size_t queries = 0;

    friend bool operator==(const CorruptionReport&, const CorruptionReport&) = default;
};

struct CwOutcome {
    std::size_t index = 0;
    bool success = false;
    double distance = 0.0;
    std::size_t queries = 0;

    friend bool operator==(const CwOutcome&, const CwOutcome&) = default;
};

struct RobustnessReport {
    std::string model_name;
    std::string dataset_digest;
    std::size_t examples = 0;
    std::vector<std::size_t> excluded;  // clean-misclassified indices
    double clean_accuracy = 0.0;
    std::uint64_t seed = 0;
    std::vector<CorruptionReport> corruptions;
    std::optional<std::vector<CwOutcome>> cw;

    friend bool operator==(const RobustnessReport&, const RobustnessReport&) = default;
};

struct ReportOptions {
    std::uint64_t seed = 0;
    std::map<CorruptionKind, std::vector<double>> grids;  // default_grid when absent
    std::optional<AttackConfig> cw;                        // white-box models only
};

RobustnessReport robustness_report(const Model& model, const Dataset& data, std::span<const CorruptionKind> kinds,
                                   const ReportOptions& options = {});

std::string report_json(const RobustnessReport& report);
// kind,severity,accuracy rows.
std::string report_curves_csv(const RobustnessReport& report);
// kind,index,min_failing_severity,passing_severity,queries rows; empty
// severity means none found.
std::string report_severities_csv(const RobustnessReport& report);

}  // namespace advbench
