#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advbench/tensor.hpp"

namespace advbench {

struct Dataset {
    Tensor images;            // (n, c, h, w)
    std::vector<int> labels;  // n entries in [0, k)

    std::size_t size() const noexcept { return labels.size(); }
    Tensor image(std::size_t i) const { return images.row(i); }
    Shape example_shape() const;

    // Subset in the given index order.
    Dataset subset(const std::vector<std::size_t>& indices) const;
    Dataset slice(std::size_t begin, std::size_t end) const;

    void validate(std::size_t num_classes) const;
};

inline constexpr double kBlobNoiseSigma = 0.1;

// k Gaussian-bump templates at distinct positions on a ring around the image
// centre, plus N(0, 0.1^2) pixel noise, clipped to [0, 1]. Labels are
// assigned round-robin and then shuffled, so class counts differ by at
// most one. Deterministic in (seed, n, k, image_size).
Dataset generate_blobs(std::uint64_t seed, std::size_t n, std::size_t k, std::size_t image_size);

// 16 hex digits of FNV-1a over shapes, image bytes and labels.
std::string dataset_digest(const Dataset& data);

// IDX files as used by MNIST: images are unsigned bytes (magic 0x00000803,
// dims n, rows, cols) mapped to value/255; labels use magic 0x00000801.
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
// Single-channel datasets only; values are quantised with round(x*255).
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);

}  // namespace advbench
