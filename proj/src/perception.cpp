#include "advbench/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "advbench/error.hpp"
#include "advbench/format.hpp"
#include "advbench/rng.hpp"

namespace advbench {
namespace {

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return 0;
    const auto m = static_cast<std::ptrdiff_t>(n);
    while (i < 0 || i >= m) i = i < 0 ? -i : 2 * (m - 1) - i;
    return static_cast<std::size_t>(i);
}

void clip(Tensor& x, const Bounds& b) {
    for (double& v : x.data()) v = std::clamp(v, b.lower, b.upper);
}

void blur(Tensor& x, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    const std::size_t planes = x.size() / (h * w);
    std::vector<double> tmp(h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        double* plane = x.data().data() + p * h * w;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t j = -radius; j <= radius; ++j)
                    acc += kernel[static_cast<std::size_t>(j + radius)] *
                           plane[r * w + reflect(static_cast<std::ptrdiff_t>(c) + j, w)];
                tmp[r * w + c] = acc;
            }
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                double acc = 0.0;
                for (std::ptrdiff_t j = -radius; j <= radius; ++j)
                    acc += kernel[static_cast<std::size_t>(j + radius)] *
                           tmp[reflect(static_cast<std::ptrdiff_t>(r) + j, h) * w + c];
                plane[r * w + c] = acc;
            }
    }
}

void rotate(Tensor& x, double degrees, double fill) {
    const std::size_t h = x.dim(x.rank() - 2);
    const std::size_t w = x.dim(x.rank() - 1);
    const std::size_t planes = x.size() / (h * w);
    const double theta = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    std::vector<double> src(h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        double* plane = x.data().data() + p * h * w;
        std::copy(plane, plane + h * w, src.begin());
        auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
            if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w)) {
                return fill;
            }
            return src[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
        };
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const double dy = static_cast<double>(r) - cy;
                const double dx = static_cast<double>(c) - cx;
                const double sx = cx + cs * dx + sn * dy;
                const double sy = cy - sn * dx + cs * dy;
                const double fy = std::floor(sy), fx = std::floor(sx);
                const double ty = sy - fy, tx = sx - fx;
                const auto r0 = static_cast<std::ptrdiff_t>(fy);
                const auto c0 = static_cast<std::ptrdiff_t>(fx);
                plane[r * w + c] = (1 - ty) * ((1 - tx) * at(r0, c0) + tx * at(r0, c0 + 1)) +
                                   ty * ((1 - tx) * at(r0 + 1, c0) + tx * at(r0 + 1, c0 + 1));
            }
    }
}

void validate_grid(std::span<const double> grid) {
    if (grid.empty()) throw ValidationError("severity grid is empty");
    if (!(grid.front() > 0.0)) throw ValidationError("severity grid must start above 0");
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw ValidationError("severity grid must be strictly increasing");
    }
}

std::uint64_t example_seed(std::uint64_t seed, std::size_t index) {
    return derive_seed(seed, "example/" + std::to_string(index));
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::infinity();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

nlohmann::json number_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

}  // namespace

std::string corruption_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::GaussianNoise: return "gaussian_noise";
        case CorruptionKind::UniformNoise: return "uniform_noise";
        case CorruptionKind::PepperNoise: return "pepper_noise";
        case CorruptionKind::GaussianBlur: return "gaussian_blur";
        case CorruptionKind::Brightness: return "brightness";
        case CorruptionKind::Rotation: return "rotation";
        case CorruptionKind::Fog: return "fog";
    }
    return "unknown";
}

CorruptionKind parse_corruption(const std::string& name) {
    for (auto kind : kAllCorruptions)
        if (corruption_name(kind) == name) return kind;
    throw ValidationError("unknown corruption '" + name +
                          "' (expected gaussian_noise, uniform_noise, pepper_noise, gaussian_blur, brightness, "
                          "rotation or fog)");
}

bool stochastic(CorruptionKind kind) {
    return kind == CorruptionKind::GaussianNoise || kind == CorruptionKind::UniformNoise ||
           kind == CorruptionKind::PepperNoise;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw ValidationError("gaussian_kernel: sigma must be > 0");
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

Tensor corrupt(const Tensor& x, const Corruption& c, Bounds bounds) {
    if (!(c.severity >= 0.0) || !std::isfinite(c.severity)) {
        throw ValidationError("corruption severity must be a finite value >= 0");
    }
    if (x.rank() != 3 && x.rank() != 4) throw ShapeError("corrupt expects (c,h,w) or (n,c,h,w)");
    if (c.severity == 0.0) return x;

    Tensor out = x;
    const double s = c.severity;
    switch (c.kind) {
        case CorruptionKind::GaussianNoise: {
            CounterRng rng(c.seed, corruption_name(c.kind));
            for (double& v : out.data()) v += s * rng.normal();
            break;
        }
        case CorruptionKind::UniformNoise: {
            CounterRng rng(c.seed, corruption_name(c.kind));
            for (double& v : out.data()) v += s * rng.uniform(-1.0, 1.0);
            break;
        }
        case CorruptionKind::PepperNoise: {
            CounterRng rng(c.seed, corruption_name(c.kind));
            const std::size_t n = out.size();
            const auto order = permutation(n, rng);
            const double wanted = std::floor(std::min(s, 1.0) * static_cast<double>(n) + 1e-9);
            const auto count = std::min(n, static_cast<std::size_t>(wanted));
            for (std::size_t i = 0; i < count; ++i) out[order[i]] = bounds.lower;
            break;
        }
        case CorruptionKind::GaussianBlur:
            blur(out, s);
            break;
        case CorruptionKind::Brightness:
            for (double& v : out.data()) v += s;
            break;
        case CorruptionKind::Rotation:
            rotate(out, s, bounds.lower);
            break;
        case CorruptionKind::Fog: {
            const double t = std::exp(-s);
            for (double& v : out.data()) v = t * v + (1.0 - t) * bounds.upper;
            break;
        }
    }
    clip(out, bounds);
    return out;
}

std::vector<double> default_grid(CorruptionKind kind) {
    double step = 0.02;
    switch (kind) {
        case CorruptionKind::GaussianNoise:
        case CorruptionKind::UniformNoise:
        case CorruptionKind::PepperNoise:
        case CorruptionKind::Brightness: step = 0.02; break;
        case CorruptionKind::GaussianBlur: step = 0.25; break;
        case CorruptionKind::Rotation: step = 2.0; break;
        case CorruptionKind::Fog: step = 0.1; break;
    }
    std::vector<double> grid(25);
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = step * static_cast<double>(i + 1);
    return grid;
}

SeveritySearch min_failing_severity(const Model& model, const Tensor& example, int label, CorruptionKind kind,
                                    std::span<const double> grid, std::uint64_t seed) {
    validate_grid(grid);
    const Bounds bounds = model.info().bounds;
    SeveritySearch out;
    out.max_tested = grid.back();
    auto fails = [&](double severity) {
        ++out.queries;
        const Tensor probe = corrupt(example, Corruption{kind, severity, seed}, bounds);
        return predict_label(model, probe) != label;
    };

    if (fails(0.0)) {
        throw CleanMisclassifiedError("clean example is not predicted as label " + std::to_string(label));
    }
    double passing = 0.0;
    for (double g : grid) {
        if (!fails(g)) {
            passing = g;
            continue;
        }
        double lo = passing, hi = g;
        for (int i = 0; i < kSeverityBisections; ++i) {
            const double mid = 0.5 * (lo + hi);
            (fails(mid) ? hi : lo) = mid;
        }
        out.severity = hi;
        out.passing = lo;
        return out;
    }
    out.passing = passing;
    return out;
}

RobustnessReport robustness_report(const Model& model, const Dataset& data, std::span<const CorruptionKind> kinds,
                                   const ReportOptions& options) {
    const ModelInfo& info = model.info();
    if (data.size() == 0) throw ValidationError("robustness report needs a non-empty dataset");
    data.validate(info.num_classes);
    if (data.example_shape() != info.input_shape) {
        throw ShapeError("dataset examples " + shape_string(data.example_shape()) + " do not match model input " +
                         shape_string(info.input_shape));
    }
    if (options.cw && !model.white_box()) {
        throw CapabilityError("cw results need a white-box model; '" + info.name + "' is prediction-only");
    }

    const std::size_t n = data.size();
    constexpr std::size_t kChunk = 256;
    auto correct_count = [&](const Tensor& images) {
        std::size_t correct = 0;
        for (std::size_t b = 0; b < n; b += kChunk) {
            const std::size_t e = std::min(n, b + kChunk);
            const auto predicted = argmax_rows(model.predict(images.rows(b, e)));
            for (std::size_t i = b; i < e; ++i)
                if (predicted[i - b] == data.labels[i]) ++correct;
        }
        return correct;
    };

    RobustnessReport report;
    report.model_name = info.name;
    report.dataset_digest = dataset_digest(data);
    report.examples = n;
    report.seed = options.seed;

    std::vector<std::size_t> included;
    std::size_t clean_correct = 0;
    for (std::size_t b = 0; b < n; b += kChunk) {
        const std::size_t e = std::min(n, b + kChunk);
        const auto predicted = argmax_rows(model.predict(data.images.rows(b, e)));
        for (std::size_t i = b; i < e; ++i) {
            if (predicted[i - b] == data.labels[i]) {
                ++clean_correct;
                included.push_back(i);
            } else {
                report.excluded.push_back(i);
            }
        }
    }
    if (included.empty()) throw CleanMisclassifiedError("every example is misclassified before corruption");
    report.clean_accuracy = static_cast<double>(clean_correct) / static_cast<double>(n);

    for (CorruptionKind kind : kinds) {
        CorruptionReport cr;
        cr.kind = kind;
        auto it = options.grids.find(kind);
        cr.grid = it != options.grids.end() ? it->second : default_grid(kind);
        validate_grid(cr.grid);

        std::vector<double> severities;
        for (std::size_t i : included) {
            ExampleSeverity ex{i, min_failing_severity(model, data.image(i), data.labels[i], kind, cr.grid,
                                                       example_seed(options.seed, i))};
            cr.queries += ex.search.queries;
            severities.push_back(ex.search.severity.value_or(std::numeric_limits<double>::infinity()));
            cr.examples.push_back(std::move(ex));
        }
        cr.median_severity = median(std::move(severities));

        cr.curve.push_back({0.0, report.clean_accuracy});
        for (double g : cr.grid) {
            std::vector<Tensor> corrupted;
            corrupted.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                corrupted.push_back(corrupt(data.image(i), Corruption{kind, g, example_seed(options.seed, i)},
                                            info.bounds));
            const std::size_t correct = correct_count(stack(corrupted));
            cr.curve.push_back({g, static_cast<double>(correct) / static_cast<double>(n)});
        }
        report.corruptions.push_back(std::move(cr));
    }

    if (options.cw) {
        AttackConfig cfg = *options.cw;
        cfg.algorithm = AttackAlgorithm::Cw;
        cfg.targeted = false;
        std::vector<CwOutcome> outcomes;
        for (std::size_t i : included) {
            const Adversary a = cw_l2(model, Adversary::untargeted(data.image(i), data.labels[i]), cfg);
            outcomes.push_back({i, a.success, a.distance, a.queries});
        }
        report.cw = std::move(outcomes);
    }
    return report;
}

std::string report_json(const RobustnessReport& report) {
    using nlohmann::json;
    json j;
    j["model_name"] = report.model_name;
    j["dataset_digest"] = report.dataset_digest;
    j["examples"] = report.examples;
    j["excluded"] = report.excluded;
    j["clean_accuracy"] = report.clean_accuracy;
    j["seed"] = report.seed;
    json kinds = json::array();
    for (const auto& cr : report.corruptions) {
        json k;
        k["kind"] = corruption_name(cr.kind);
        k["grid"] = cr.grid;
        k["median_min_failing_severity"] = number_or_null(cr.median_severity);
        k["queries"] = cr.queries;
        json curve = json::array();
        for (const auto& p : cr.curve) curve.push_back({{"severity", p.severity}, {"accuracy", p.accuracy}});
        k["curve"] = curve;
        json examples = json::array();
        for (const auto& ex : cr.examples) {
            json e;
            e["index"] = ex.index;
            e["min_failing_severity"] = ex.search.severity ? json(*ex.search.severity) : json(nullptr);
            e["passing_severity"] = ex.search.passing;
            e["none_found"] = !ex.search.severity.has_value();
            e["max_tested"] = ex.search.max_tested;
            e["queries"] = ex.search.queries;
            examples.push_back(e);
        }
        k["examples"] = examples;
        kinds.push_back(k);
    }
    j["corruptions"] = kinds;
    if (report.cw) {
        json cw = json::array();
        for (const auto& c : *report.cw)
            cw.push_back({{"index", c.index}, {"success", c.success}, {"distance", c.distance}, {"queries", c.queries}});
        j["cw_l2"] = cw;
    }
    return j.dump(2) + "\n";
}

std::string report_curves_csv(const RobustnessReport& report) {
    std::string out = "kind,severity,accuracy\n";
    for (const auto& cr : report.corruptions)
        for (const auto& p : cr.curve)
            out += corruption_name(cr.kind) + "," + format_double(p.severity) + "," + format_double(p.accuracy) + "\n";
    return out;
}

std::string report_severities_csv(const RobustnessReport& report) {
    std::string out = "kind,index,min_failing_severity,passing_severity,queries\n";
    for (const auto& cr : report.corruptions)
        for (const auto& ex : cr.examples)
            out += corruption_name(cr.kind) + "," + std::to_string(ex.index) + "," +
                   (ex.search.severity ? format_double(*ex.search.severity) : std::string()) + "," +
                   format_double(ex.search.passing) + "," + std::to_string(ex.search.queries) + "\n";
    return out;
}

}  // namespace advbench
