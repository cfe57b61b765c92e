#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "advbench/models.hpp"

namespace advbench {

inline constexpr int kModelFormatVersion = 1;

// Input transform recorded in a defended-model file ("squeeze_bits",
// "median_smooth" or "thermometer" with its integer parameter).
struct TransformSpec {
    std::string kind;
    int parameter = 0;

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct ModelFile {
    NetworkModel network;
    std::optional<TransformSpec> transform;
};

// Layout: the 10 bytes "ADVBMODEL\n", a little-endian uint64 header length,
// a UTF-8 JSON header (format_version, architecture, input_shape,
// num_classes, bounds, parameters[{name, shape}], optional input_transform),
// then every parameter as little-endian float64 in header order.
void save_model(const NetworkModel& model, const std::filesystem::path& path,
                const std::optional<TransformSpec>& transform = std::nullopt);

ModelFile read_model_file(const std::filesystem::path& path);

// Network only; a recorded input transform is ignored.
NetworkModel load_model(const std::filesystem::path& path);

}  // namespace advbench
