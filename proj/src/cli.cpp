#include "advbench/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "advbench/dataset.hpp"
#include "advbench/format.hpp"
#include "advbench/image_io.hpp"
#include "advbench/model_io.hpp"
#include "advbench/remote.hpp"
#include "advbench/rng.hpp"

namespace advbench::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Typed access to one JSON object that remembers which keys were read, so
// leftovers can be reported as unknown.
class Fields {
public:
    Fields(const json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) throw ConfigError(path_, "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return object_.contains(key);
    }

    std::string at(const std::string& key) const { return path_ + "." + key; }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return object_.at(key);
    }

    std::string string(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }

    double number(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        return v.get<double>();
    }

    std::uint64_t unsigned_int(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    int integer(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        const auto value = v.get<std::int64_t>();
        if (value < INT32_MIN || value > INT32_MAX) throw ConfigError(at(key), "integer out of range");
        return static_cast<int>(value);
    }

    bool boolean(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }

    template <typename T, typename Read>
    void optional(const std::string& key, T& target, Read read) {
        if (has(key)) target = (this->*read)(key);
    }

    void finish() const {
        for (const auto& [key, value] : object_.items()) {
            if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
        }
    }

private:
    const json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename F>
auto located(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ConfigError(where, e.what());
    }
}

Command parse_command(const std::string& name, const std::string& where) {
    for (auto c : {Command::Train, Command::Attack, Command::Defend, Command::Evaluate, Command::Serve})
        if (command_name(c) == name) return c;
    throw ConfigError(where, "unknown command '" + name + "'");
}

fs::path resolve_path(const std::string& text, const fs::path& base) {
    fs::path p(text);
    if (p.is_relative()) p = base / p;
    return p.lexically_normal();
}

fs::path existing_path(Fields& f, const std::string& key, const fs::path& base) {
    const fs::path p = resolve_path(f.string(key), base);
    if (!fs::exists(p)) throw ConfigError(f.at(key), "'" + p.string() + "' does not exist");
    return p;
}

DatasetSpec parse_dataset(const json& j, const fs::path& base) {
    Fields f(j, "$.dataset");
    DatasetSpec d;
    if (f.has("generator")) d.generator = f.string("generator");
    if (d.generator == "blobs") {
        f.optional("seed", d.seed, &Fields::unsigned_int);
        f.optional("n", d.n, &Fields::unsigned_int);
        f.optional("classes", d.classes, &Fields::unsigned_int);
        f.optional("image_size", d.image_size, &Fields::unsigned_int);
        if (d.classes < 1 || d.classes > 10) throw ConfigError(f.at("classes"), "must be in [1, 10]");
        if (d.image_size < 4) throw ConfigError(f.at("image_size"), "must be >= 4");
        if (d.n < 1) throw ConfigError(f.at("n"), "must be >= 1");
    } else if (d.generator == "idx") {
        if (!f.has("images") || !f.has("labels")) throw ConfigError("$.dataset", "idx datasets need images and labels");
        d.idx_images = existing_path(f, "images", base);
        d.idx_labels = existing_path(f, "labels", base);
        d.classes = 10;
        f.optional("classes", d.classes, &Fields::unsigned_int);
        if (d.classes < 1) throw ConfigError(f.at("classes"), "must be >= 1");
    } else {
        throw ConfigError(f.at("generator"), "expected \"blobs\" or \"idx\"");
    }
    f.finish();
    return d;
}

TrainSection parse_train(const json* j, std::uint64_t seed) {
    TrainSection t;
    t.config.seed = seed;
    if (j) {
        Fields f(*j, "$.train");
        if (f.has("architecture")) {
            t.architecture = located(f.at("architecture"), [&] { return parse_architecture(f.string("architecture")); });
        }
        f.optional("epochs", t.config.epochs, &Fields::unsigned_int);
        f.optional("batch_size", t.config.batch_size, &Fields::unsigned_int);
        f.optional("learning_rate", t.config.learning_rate, &Fields::number);
        f.optional("seed", t.config.seed, &Fields::unsigned_int);
        f.optional("label_smoothing", t.config.label_smoothing, &Fields::number);
        f.finish();
    }
    located("$.train", [&] { t.config.validate(); return 0; });
    return t;
}

// Attack hyperparameters shared by the attack, defense and cw blocks.
void read_attack_fields(Fields& f, AttackConfig& cfg) {
    f.optional("epsilon", cfg.epsilon, &Fields::number);
    f.optional("step_size", cfg.step_size, &Fields::number);
    f.optional("iterations", cfg.iterations, &Fields::unsigned_int);
    if (f.has("metric")) cfg.metric = located(f.at("metric"), [&] { return parse_metric(f.string("metric")); });
    f.optional("targeted", cfg.targeted, &Fields::boolean);
    f.optional("seed", cfg.seed, &Fields::unsigned_int);
    f.optional("overshoot", cfg.overshoot, &Fields::number);
    f.optional("theta", cfg.theta, &Fields::number);
    f.optional("gamma", cfg.gamma, &Fields::number);
    f.optional("confidence", cfg.confidence, &Fields::number);
    f.optional("binary_search_steps", cfg.binary_search_steps, &Fields::unsigned_int);
    f.optional("inner_steps", cfg.inner_steps, &Fields::unsigned_int);
    f.optional("initial_c", cfg.initial_c, &Fields::number);
    f.optional("learning_rate", cfg.cw_learning_rate, &Fields::number);
}

AttackConfig parse_attack_config(const json& j, const std::string& path, std::uint64_t seed,
                                 std::optional<AttackAlgorithm> fallback, AttackSection* section) {
    Fields f(j, path);
    AttackAlgorithm algorithm;
    if (f.has("algorithm")) {
        algorithm = located(f.at("algorithm"), [&] { return parse_algorithm(f.string("algorithm")); });
    } else if (fallback) {
        algorithm = *fallback;
    } else {
        throw ConfigError(path, "missing key 'algorithm'");
    }
    AttackConfig cfg = algorithm == AttackAlgorithm::Pgd && fallback ? DefenseConfig::pgd_training_attack()
                                                                      : AttackConfig::defaults(algorithm);
    cfg.seed = seed;
    read_attack_fields(f, cfg);
    if (section) {
        if (f.has("target")) {
            section->target = f.integer("target");
            cfg.targeted = true;
        }
        f.optional("epsilon_search", section->epsilon_search, &Fields::boolean);
        if (f.has("examples")) section->examples = f.unsigned_int("examples");
    }
    f.finish();
    located(path, [&] { cfg.validate(); return 0; });
    if (cfg.metric != AttackConfig::defaults(algorithm).metric) {
        throw ConfigError(path + ".metric", algorithm_name(algorithm) + " measures " +
                                                metric_name(AttackConfig::defaults(algorithm).metric));
    }
    if (section && section->epsilon_search && !epsilon_parameterized(algorithm)) {
        throw ConfigError(path + ".epsilon_search", "only fgsm, bim and pgd support epsilon search");
    }
    return cfg;
}

DefenseConfig parse_defense_section(const json& j, std::uint64_t seed) {
    Fields f(j, "$.defense");
    DefenseConfig d;
    if (!f.has("kind")) throw ConfigError("$.defense", "missing key 'kind'");
    d.kind = located(f.at("kind"), [&] { return parse_defense(f.string("kind")); });
    f.optional("bit_depth", d.bit_depth, &Fields::integer);
    f.optional("window", d.window, &Fields::integer);
    f.optional("alpha", d.alpha, &Fields::number);
    f.optional("sigma", d.sigma, &Fields::number);
    f.optional("ratio", d.ratio, &Fields::number);
    f.optional("mix_ratio", d.mix_ratio, &Fields::number);
    f.optional("levels", d.levels, &Fields::integer);
    d.attack.seed = seed;
    if (f.has("attack")) {
        d.attack = parse_attack_config(f.raw("attack"), "$.defense.attack", seed, AttackAlgorithm::Pgd, nullptr);
    }
    f.finish();
    located("$.defense", [&] { d.validate(); return 0; });
    return d;
}

EvaluateSection parse_evaluate(const json* j, std::uint64_t seed) {
    EvaluateSection e;
    e.seed = seed;
    e.corruptions.assign(std::begin(kAllCorruptions), std::end(kAllCorruptions));
    if (!j) return e;
    Fields f(*j, "$.evaluate");
    if (f.has("corruptions")) {
        const json& list = f.raw("corruptions");
        if (!list.is_array() || list.empty()) throw ConfigError(f.at("corruptions"), "expected a non-empty list");
        e.corruptions.clear();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string where = f.at("corruptions") + "[" + std::to_string(i) + "]";
            if (!list[i].is_string()) throw ConfigError(where, "expected a corruption name");
            const auto kind = located(where, [&] { return parse_corruption(list[i].get<std::string>()); });
            if (std::find(e.corruptions.begin(), e.corruptions.end(), kind) != e.corruptions.end()) {
                throw ConfigError(where, "listed twice");
            }
            e.corruptions.push_back(kind);
        }
    }
    if (f.has("grids")) {
        const json& grids = f.raw("grids");
        if (!grids.is_object()) throw ConfigError(f.at("grids"), "expected an object");
        for (const auto& [name, values] : grids.items()) {
            const std::string where = f.at("grids") + "." + name;
            const auto kind = located(where, [&] { return parse_corruption(name); });
            if (!values.is_array()) throw ConfigError(where, "expected a list of severities");
            std::vector<double> grid;
            for (const auto& v : values) {
                if (!v.is_number()) throw ConfigError(where, "expected numbers");
                grid.push_back(v.get<double>());
            }
            if (grid.empty() || !(grid.front() > 0.0)) throw ConfigError(where, "grid must be non-empty and start above 0");
            for (std::size_t i = 1; i < grid.size(); ++i)
                if (!(grid[i] > grid[i - 1])) throw ConfigError(where, "grid must be strictly increasing");
            e.grids[kind] = std::move(grid);
        }
    }
    if (f.has("examples")) e.examples = f.unsigned_int("examples");
    f.optional("seed", e.seed, &Fields::unsigned_int);
    if (f.has("cw")) {
        json cw = f.raw("cw");
        if (cw.is_object()) cw["algorithm"] = "cw";
        e.cw = parse_attack_config(cw, "$.evaluate.cw", seed, std::nullopt, nullptr);
        if (e.cw->targeted) throw ConfigError("$.evaluate.cw.targeted", "robustness reports use untargeted cw");
    }
    f.finish();
    return e;
}

std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

json attack_json(const AttackConfig& c) {
    return json{{"algorithm", algorithm_name(c.algorithm)},
                {"epsilon", c.epsilon},
                {"step_size", c.step_size},
                {"iterations", c.iterations},
                {"metric", metric_name(c.metric)},
                {"targeted", c.targeted},
                {"seed", c.seed},
                {"overshoot", c.overshoot},
                {"theta", c.theta},
                {"gamma", c.gamma},
                {"confidence", c.confidence},
                {"binary_search_steps", c.binary_search_steps},
                {"inner_steps", c.inner_steps},
                {"initial_c", c.initial_c},
                {"learning_rate", c.cw_learning_rate}};
}

bool trains_model(DefenseKind kind) {
    return kind != DefenseKind::FeatureSqueeze && kind != DefenseKind::SpatialSmooth;
}

json resolved(const RunConfig& c) {
    json j;
    j["command"] = command_name(c.command);
    j["seed"] = c.seed;
    if (c.model) j["model"] = c.model->string();
    if (c.endpoint) j["endpoint"] = *c.endpoint;
    if (c.dataset) {
        const DatasetSpec& d = *c.dataset;
        if (d.generator == "blobs") {
            j["dataset"] = {{"generator", "blobs"}, {"seed", d.seed}, {"n", d.n}, {"classes", d.classes},
                            {"image_size", d.image_size}};
        } else {
            j["dataset"] = {{"generator", "idx"}, {"images", d.idx_images.string()}, {"labels", d.idx_labels.string()},
                            {"classes", d.classes}};
        }
    }
    const bool needs_train = c.command == Command::Train ||
                             (c.command == Command::Defend && trains_model(c.defense.kind));
    if (needs_train) {
        const TrainConfig& t = c.train.config;
        j["train"] = {{"architecture", architecture_name(c.train.architecture)},
                      {"epochs", t.epochs},
                      {"batch_size", t.batch_size},
                      {"learning_rate", t.learning_rate},
                      {"seed", t.seed},
                      {"label_smoothing", t.label_smoothing}};
    }
    if (c.command == Command::Attack) {
        json a = attack_json(c.attack.config);
        if (c.attack.target) a["target"] = *c.attack.target;
        a["epsilon_search"] = c.attack.epsilon_search;
        if (c.attack.examples) a["examples"] = *c.attack.examples;
        j["attack"] = a;
    }
    if (c.command == Command::Defend) {
        const DefenseConfig& d = c.defense;
        j["defense"] = {{"kind", defense_name(d.kind)}, {"bit_depth", d.bit_depth}, {"window", d.window},
                        {"alpha", d.alpha},           {"sigma", d.sigma},         {"ratio", d.ratio},
                        {"mix_ratio", d.mix_ratio},   {"levels", d.levels},       {"attack", attack_json(d.attack)}};
    }
    if (c.command == Command::Evaluate) {
        const EvaluateSection& e = c.evaluate;
        json kinds = json::array();
        for (auto k : e.corruptions) kinds.push_back(corruption_name(k));
        json grids = json::object();
        for (auto k : e.corruptions) {
            auto it = e.grids.find(k);
            grids[corruption_name(k)] = it != e.grids.end() ? it->second : default_grid(k);
        }
        json ev{{"corruptions", kinds}, {"grids", grids}, {"seed", e.seed}};
        if (e.examples) ev["examples"] = *e.examples;
        if (e.cw) {
            json cw = attack_json(*e.cw);
            cw.erase("algorithm");
            ev["cw"] = cw;
        }
        j["evaluate"] = ev;
    }
    if (c.command == Command::Serve && c.bind) j["serve"] = {{"bind", *c.bind}};
    return j;
}

// ---------------------------------------------------------------------------
// Runtime

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const DatasetSpec& d) {
    if (d.generator == "blobs") return generate_blobs(d.seed, d.n, d.classes, d.image_size);
    Dataset data = read_idx(d.idx_images, d.idx_labels);
    data.validate(d.classes);
    return data;
}

std::shared_ptr<const Model> open_model(const RunConfig& c) {
    if (c.endpoint) return std::make_shared<const RemoteModel>(*c.endpoint);
    return load_any_model(*c.model);
}

void check_dataset(const Dataset& data, const ModelInfo& info) {
    data.validate(info.num_classes);
    if (data.example_shape() != info.input_shape) {
        throw ShapeError("dataset examples " + shape_string(data.example_shape()) + " do not match model input " +
                         shape_string(info.input_shape));
    }
}

std::string padded(std::size_t i) {
    std::string s = std::to_string(i);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

void write_example_images(const fs::path& dir, const std::string& stem, const Tensor& image, const Bounds& bounds) {
    if (image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3)) {
        write_netpbm(image, dir / (stem + (image.dim(0) == 1 ? ".pgm" : ".ppm")), bounds);
    }
    write_raw_f64(image, dir / (stem + ".f64"));
}

json train_metrics(const NetworkModel& model, const Dataset& data, const TrainLog& log) {
    return json{{"model_name", model.info().name},
                {"dataset_digest", dataset_digest(data)},
                {"epoch_losses", log.epoch_losses},
                {"train_accuracy", accuracy(model, data.images, data.labels)}};
}

void run_train(const RunConfig& c, const fs::path& out, std::ostream& err) {
    const Dataset data = load_dataset(*c.dataset);
    const NetworkModel init = NetworkModel::initialize(c.train.architecture, data.example_shape(), c.dataset->classes,
                                                       c.train.config.seed);
    err << "training " << architecture_name(c.train.architecture) << " on " << data.size() << " examples\n";
    TrainLog log;
    const NetworkModel model = train(init, data, c.train.config, &log);
    save_model(model, out / "model.advb");
    write_text(out / "metrics.json", train_metrics(model, data, log).dump(2) + "\n");
    err << "wrote " << (out / "model.advb").string() << "\n";
}

void run_attack(const RunConfig& c, const fs::path& out, std::ostream& err) {
    const auto model = open_model(c);
    const ModelInfo& info = model->info();
    Dataset data = load_dataset(*c.dataset);
    check_dataset(data, info);
    const std::size_t count = std::min(data.size(), c.attack.examples.value_or(data.size()));
    const AttackConfig& base = c.attack.config;
    const auto k = static_cast<int>(info.num_classes);

    const fs::path images = out / "images";
    fs::create_directories(images);
    json records = json::array();
    std::string csv = "index,true_label,predicted,target,success,distance,queries\n";
    std::size_t successes = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const int label = data.labels[i];
        Adversary request = Adversary::untargeted(data.image(i), label);
        if (base.targeted) request.target = c.attack.target.value_or((label + 1) % k);
        AttackConfig cfg = base;
        cfg.seed = derive_seed(base.seed, "example/" + std::to_string(i));

        json rec{{"index", i}, {"true_label", label}};
        rec["target"] = request.target ? json(*request.target) : json(nullptr);
        std::optional<Adversary> result;
        try {
            if (c.attack.epsilon_search) {
                auto found = epsilon_search(*model, request, cfg);
                result = std::move(found.adversary);
                rec["epsilon"] = found.epsilon;
                rec["failed_epsilon"] = found.failed_epsilon;
            } else {
                result = advbench::run_attack(*model, request, cfg);
                if (result->epsilon) rec["epsilon"] = *result->epsilon;
            }
        } catch (const CapabilityError&) {
            throw;
        } catch (const Error& e) {
            rec["error"] = {{"code", e.code()}, {"detail", e.what()}};
        }

        std::string row = std::to_string(i) + "," + std::to_string(label) + ",";
        if (result) {
            rec["predicted"] = result->predicted ? json(*result->predicted) : json(nullptr);
            rec["success"] = result->success;
            rec["distance"] = result->distance;
            rec["queries"] = result->queries;
            rec["metric"] = metric_name(cfg.metric);
            if (result->success) ++successes;
            const std::string stem = padded(i);
            write_example_images(images, stem + "_original", request.original, info.bounds);
            if (result->candidate) write_example_images(images, stem + "_adversarial", *result->candidate, info.bounds);
            row += (result->predicted ? std::to_string(*result->predicted) : std::string()) + ",";
            row += (request.target ? std::to_string(*request.target) : std::string()) + ",";
            row += std::string(result->success ? "true" : "false") + "," + format_double(result->distance) + "," +
                   std::to_string(result->queries);
        } else {
            rec["success"] = false;
            row += ",";
            row += (request.target ? std::to_string(*request.target) : std::string()) + ",false,,";
        }
        csv += row + "\n";
        records.push_back(std::move(rec));
        if ((i + 1) % 50 == 0 || i + 1 == count) err << "attacked " << (i + 1) << "/" << count << "\n";
    }
    write_text(out / "adversaries.json", json{{"model_name", info.name}, {"adversaries", records}}.dump(2) + "\n");
    write_text(out / "summary.csv", csv);
    err << successes << "/" << count << " successful\n";
}

void run_defend(const RunConfig& c, const fs::path& out, std::ostream& err) {
    const DefenseConfig& d = c.defense;
    if (!trains_model(d.kind)) {
        const ModelFile file = read_model_file(*c.model);
        if (file.transform) throw ValidationError("model already carries an input transform");
        const TransformSpec spec = d.kind == DefenseKind::FeatureSqueeze ? TransformSpec{"squeeze_bits", d.bit_depth}
                                                                          : TransformSpec{"median_smooth", d.window};
        const DefendedModel defended(file.network, spec);
        save_defended_model(defended, out / "model.advb");
        err << "wrote " << defended.info().name << "\n";
        return;
    }

    Dataset data = load_dataset(*c.dataset);
    const std::size_t k = c.dataset->classes;
    TrainConfig tc = c.train.config;
    json metrics;
    if (d.kind == DefenseKind::Thermometer) {
        TrainLog log;
        const DefendedModel model = train_thermometer_model(data, k, d.levels, tc, &log);
        save_defended_model(model, out / "model.advb");
        metrics = {{"model_name", model.info().name},
                   {"dataset_digest", dataset_digest(data)},
                   {"epoch_losses", log.epoch_losses},
                   {"train_accuracy", accuracy(model, data.images, data.labels)}};
    } else {
        if (d.kind == DefenseKind::LabelSmooth) tc.label_smoothing = d.alpha;
        if (d.kind == DefenseKind::GaussianAugment) {
            data = gaussian_augment(data, d.sigma, d.ratio, tc.seed);
            if (data.images.dim(1) == 1) write_idx(data, out / "augmented-images.idx", out / "augmented-labels.idx");
        }
        const NetworkModel init = NetworkModel::initialize(c.train.architecture, data.example_shape(), k, tc.seed);
        TrainLog log;
        NetworkModel model = init;
        if (d.kind == DefenseKind::AdversarialTrain) {
            AdversarialTrainLog adv;
            model = adversarial_train(init, data, d.attack, d.mix_ratio, tc, &adv);
            for (const auto& f : adv.failures) err << "attack failed, kept clean example (" << f << ")\n";
            log = adv.train;
            metrics["substituted"] = adv.substituted;
            metrics["attack_failures"] = adv.failures.size();
        } else {
            model = train(init, data, tc, &log);
        }
        save_model(model, out / "model.advb");
        metrics.update(train_metrics(model, data, log));
    }
    metrics["defense"] = defense_name(d.kind);
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    err << "wrote " << (out / "model.advb").string() << "\n";
}

void run_evaluate(const RunConfig& c, const fs::path& out, std::ostream& err) {
    const auto model = open_model(c);
    Dataset data = load_dataset(*c.dataset);
    check_dataset(data, model->info());
    if (c.evaluate.examples && *c.evaluate.examples < data.size()) data = data.slice(0, *c.evaluate.examples);
    ReportOptions options;
    options.seed = c.evaluate.seed;
    options.grids = c.evaluate.grids;
    options.cw = c.evaluate.cw;
    err << "evaluating " << model->info().name << " on " << data.size() << " examples\n";
    const RobustnessReport report = robustness_report(*model, data, c.evaluate.corruptions, options);
    write_text(out / "report.json", report_json(report));
    write_text(out / "curves.csv", report_curves_csv(report));
    write_text(out / "severities.csv", report_severities_csv(report));
}

// Bind precedence: --endpoint flag, then ADVBENCH_BIND, then the config.
void run_serve(const RunConfig& c, const std::optional<std::string>& flag, std::ostream& err) {
    BindAddress address;
    if (flag || std::getenv("ADVBENCH_BIND") || !c.bind) {
        address = resolve_bind_address(flag);
    } else {
        address = parse_bind_address(*c.bind);
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    PredictionServer server(load_any_model(*c.model), address);
    err << "serving " << server.endpoint() << " (Ctrl-C to stop)\n";
    int received = 0;
    sigwait(&signals, &received);
    err << "shutting down\n";
    server.stop();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
}

}  // namespace

std::string command_name(Command command) {
    switch (command) {
        case Command::Train: return "train";
        case Command::Attack: return "attack";
        case Command::Defend: return "defend";
        case Command::Evaluate: return "evaluate";
        case Command::Serve: return "serve";
    }
    return "unknown";
}

RunConfig parse_run_config(const std::string& text, Command command, const fs::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(line_column(text, e.byte), "invalid JSON");
    }
    // A manifest from an earlier run carries the resolved config.
    if (root.is_object() && root.contains("tool") && root.contains("config")) {
        Fields manifest(root, "$");
        if (manifest.string("tool") != "advbench") throw ConfigError("$.tool", "not an advbench manifest");
        manifest.has("config");
        manifest.has("version");
        manifest.has("seeds");
        manifest.has("image_quantization");
        manifest.finish();
        root = root["config"];
    }

    Fields f(root, "$");
    RunConfig c;
    c.command = command;
    if (f.has("command") && parse_command(f.string("command"), f.at("command")) != command) {
        throw ConfigError(f.at("command"), "config is for '" + f.string("command") + "', not '" +
                                               command_name(command) + "'");
    }
    f.optional("seed", c.seed, &Fields::unsigned_int);
    if (f.has("model")) c.model = existing_path(f, "model", base_dir);
    if (f.has("endpoint")) c.endpoint = f.string("endpoint");
    if (f.has("dataset")) c.dataset = parse_dataset(f.raw("dataset"), base_dir);
    if (f.has("output_dir")) c.output_dir = resolve_path(f.string("output_dir"), base_dir);
    c.train = parse_train(f.has("train") ? &f.raw("train") : nullptr, c.seed);
    if (f.has("attack")) {
        c.attack.config = parse_attack_config(f.raw("attack"), "$.attack", c.seed, std::nullopt, &c.attack);
    } else if (command == Command::Attack) {
        throw ConfigError("$", "attack runs need an 'attack' block");
    }
    if (f.has("defense")) {
        c.defense = parse_defense_section(f.raw("defense"), c.seed);
    } else if (command == Command::Defend) {
        throw ConfigError("$", "defend runs need a 'defense' block");
    }
    c.evaluate = parse_evaluate(f.has("evaluate") ? &f.raw("evaluate") : nullptr, c.seed);
    if (f.has("serve")) {
        Fields s(f.raw("serve"), "$.serve");
        if (s.has("bind")) {
            c.bind = s.string("bind");
            located("$.serve.bind", [&] { return parse_bind_address(*c.bind); });
        }
        s.finish();
    }
    f.finish();

    const bool remote_ok = command == Command::Attack || command == Command::Evaluate;
    const bool needs_model = command == Command::Serve ||
                             (command == Command::Defend && !trains_model(c.defense.kind)) ||
                             (remote_ok && !c.endpoint);
    const bool needs_data = command == Command::Train || command == Command::Attack || command == Command::Evaluate ||
                            (command == Command::Defend && trains_model(c.defense.kind));
    if (needs_model && !c.model) {
        throw ConfigError("$", command_name(command) + " runs need a 'model' path" +
                                   (remote_ok ? " or an 'endpoint'" : ""));
    }
    if (needs_data && !c.dataset) throw ConfigError("$", command_name(command) + " runs need a 'dataset' block");
    if (remote_ok && c.model && c.endpoint) {
        throw ConfigError("$", "give either 'model' or 'endpoint', not both");
    }
    if (command == Command::Attack && c.attack.config.algorithm == AttackAlgorithm::Jsma && !c.attack.config.targeted) {
        throw ConfigError("$.attack.targeted", "jsma is targeted only");
    }
    if (command == Command::Attack && c.attack.config.algorithm == AttackAlgorithm::DeepFool &&
        c.attack.config.targeted) {
        throw ConfigError("$.attack.targeted", "deepfool is untargeted only");
    }
    if (c.attack.target && c.dataset && (*c.attack.target < 0 || static_cast<std::size_t>(*c.attack.target) >= c.dataset->classes)) {
        throw ConfigError("$.attack.target", "outside the dataset's classes");
    }
    if (command == Command::Defend && c.defense.kind == DefenseKind::Thermometer &&
        c.train.architecture != Architecture::Mlp) {
        throw ConfigError("$.train.architecture", "thermometer defenses train an mlp");
    }
    return c;
}

std::string resolved_config_json(const RunConfig& config) { return resolved(config).dump(2); }

int run_cli(const std::vector<std::string>& args, std::ostream& err) {
    CLI::App app{"Adversarial robustness benchmark toolkit", "advbench"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::string> endpoint;
    for (auto name : {"train", "attack", "defend", "evaluate", "serve"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON config or manifest")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--endpoint", endpoint,
                        std::string(name) == "serve" ? "bind address host:port" : "remote model URL");
    }
    app.set_version_flag("--version", kToolVersion);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        err << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        err << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "advbench: " << e.what() << "\n";
        return 1;
    }
    const Command command = parse_command(app.get_subcommands().front()->get_name(), "command line");

    RunConfig config;
    fs::path out;
    try {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw ConfigError(config_path, "cannot read config file");
        const std::string text{std::istreambuf_iterator<char>(in), {}};
        try {
            config = parse_run_config(text, command, fs::absolute(config_path).parent_path());
        } catch (const ConfigError& e) {
            throw ConfigError(config_path + ": " + e.where(), e.detail());
        }
        if (endpoint) {
            if (command == Command::Attack || command == Command::Evaluate) {
                config.endpoint = *endpoint;
                config.model.reset();
            } else if (command == Command::Serve) {
                parse_bind_address(*endpoint);
            } else {
                throw ConfigError("--endpoint", "not used by " + command_name(command));
            }
        }
        out = out_dir ? fs::path(*out_dir) : config.output_dir.value_or(fs::path("advbench-" + command_name(command)));
    } catch (const Error& e) {
        err << "advbench: invalid configuration [" << e.code() << "]: " << e.what() << "\n";
        return 1;
    }

    try {
        fs::create_directories(out);
        json manifest{{"tool", "advbench"},
                      {"version", kToolVersion},
                      {"config", resolved(config)},
                      {"seeds",
                       {{"global", config.seed},
                        {"train", config.train.config.seed},
                        {"attack", config.attack.config.seed},
                        {"evaluate", config.evaluate.seed}}},
                      {"image_quantization",
                       "8-bit, q = round((x - lower) / (upper - lower) * 255); full precision in .f64 files"}};
        write_text(out / "manifest.json", manifest.dump(2) + "\n");

        switch (command) {
            case Command::Train: run_train(config, out, err); break;
            case Command::Attack: run_attack(config, out, err); break;
            case Command::Defend: run_defend(config, out, err); break;
            case Command::Evaluate: run_evaluate(config, out, err); break;
            case Command::Serve: run_serve(config, endpoint, err); break;
        }
    } catch (const Error& e) {
        err << "advbench: " << command_name(command) << " failed [" << e.code() << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "advbench: " << command_name(command) << " failed [internal]: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace advbench::cli
