#pragma once

#include <filesystem>

#include "advbench/models.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

// 8-bit binary PGM (1 channel) or PPM (3 channels) of a (c,h,w) tensor,
// scaled linearly so that bounds.lower -> 0 and bounds.upper -> 255.
void write_netpbm(const Tensor& image, const std::filesystem::path& path, Bounds bounds = {});
// Inverse mapping: (c,h,w) with values lower + q/255 * (upper - lower).
Tensor read_netpbm(const std::filesystem::path& path, Bounds bounds = {});
// The tensor a write/read round trip produces.
Tensor quantize_8bit(const Tensor& image, Bounds bounds = {});

// Little-endian float64 payload plus a JSON sidecar at `path` + ".json"
// holding shape, dtype and byte order.
void write_raw_f64(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_raw_f64(const std::filesystem::path& path);

}  // namespace advbench
