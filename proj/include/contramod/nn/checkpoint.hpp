#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "contramod/nn/params.hpp"

namespace contramod::nn {

// Checkpoint v1 (little-endian):
//   "CMCK" | u32 version=1 | u32 param_count
//   param_count x { u16 name_len | name | u8 ndim | u32 dims[ndim] | f32 values (row-major) }
//   u32 CRC-32 of every preceding byte

/// Serializes parameters whose name starts with `prefix` (all by default).
std::vector<std::uint8_t> encode_checkpoint(const ParameterTree<float>& params, std::string_view prefix = {});
ParameterTree<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParameterTree<float>& params, const std::filesystem::path& path,
                     std::string_view prefix = {});
ParameterTree<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace contramod::nn
