#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mi2a/tensor.hpp"

namespace mi2a {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// Layout: "MI2A", u32 version, u32 rank, rank x u64 extents, little-endian f64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace mi2a
