#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace advbench {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

// Counter-based generator: the i-th draw is a pure function of
// (seed, stream name, i), so streams are reproducible on any platform and
// independent of library RNG implementations.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::string_view stream);

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept;
    double uniform(double low, double high) noexcept;
    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal() noexcept;
    // Uniform integer in [0, n).
    std::size_t below(std::size_t n) noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, CounterRng& rng);

// Child seed for the named sub-task (e.g. "example/17").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace advbench
