#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/defenses.hpp"
#include "advbench/error.hpp"
#include "advbench/models.hpp"
#include "advbench/perception.hpp"

namespace advbench::cli {

inline constexpr const char* kToolVersion = "1.0.0";

enum class Command { Train, Attack, Defend, Evaluate, Serve };

std::string command_name(Command command);

// Configuration problem located at a JSON path such as "$.attack.epsilon"
// or at a line/column of the config text.
class ConfigError : public ValidationError {
public:
    ConfigError(std::string where, const std::string& what)
        : ValidationError(where + ": " + what), where_(std::move(where)), detail_(what) {}

    const std::string& where() const noexcept { return where_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string where_;
    std::string detail_;
};

struct DatasetSpec {
    std::string generator = "blobs";  // "blobs" or "idx"
    std::uint64_t seed = 0;
    std::size_t n = 200;
    std::size_t classes = 4;
    std::size_t image_size = 8;
    std::filesystem::path idx_images;
    std::filesystem::path idx_labels;
};

struct TrainSection {
    Architecture architecture = Architecture::Mlp;
    TrainConfig config;
};

struct AttackSection {
    AttackConfig config;
    std::optional<int> target;  // targeted runs default to (label + 1) mod k
    bool epsilon_search = false;
    std::optional<std::size_t> examples;
};

struct EvaluateSection {
    std::vector<CorruptionKind> corruptions;
    std::map<CorruptionKind, std::vector<double>> grids;
    std::optional<std::size_t> examples;
    std::optional<AttackConfig> cw;
    std::uint64_t seed = 0;
};

struct RunConfig {
    Command command = Command::Train;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> model;
    std::optional<std::string> endpoint;
    std::optional<DatasetSpec> dataset;
    std::optional<std::filesystem::path> output_dir;
    TrainSection train;
    AttackSection attack;
    DefenseConfig defense;
    EvaluateSection evaluate;
    std::optional<std::string> bind;
};

// Parses a config (or a manifest written by a previous run) for `command`.
// Relative paths resolve against `base_dir`. Throws ConfigError.
RunConfig parse_run_config(const std::string& text, Command command, const std::filesystem::path& base_dir);

// Fully resolved config as JSON text (every default filled in), the form
// recorded in manifests.
std::string resolved_config_json(const RunConfig& config);

// Runs `advbench <args...>` (args excludes the program name). Returns the
// process exit code: 0 success, 1 invalid configuration, 2 runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& err);

}  // namespace advbench::cli
