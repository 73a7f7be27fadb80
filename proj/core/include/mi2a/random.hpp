#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "mi2a/tensor.hpp"

namespace mi2a {

using Rng = std::mt19937_64;

/// Derives an independent 64-bit seed for a named stream (splitmix64 over an FNV-1a hash
/// of the name). Used to give every layer its own generator.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// 64-bit FNV-1a hash; stable across platforms, used for config hashes.
std::uint64_t fnv1a64(std::string_view bytes);

Tensor uniform_tensor(const Shape& shape, double lo, double hi, Rng& rng);
Tensor normal_tensor(const Shape& shape, double mean, double stddev, Rng& rng);
/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace mi2a
