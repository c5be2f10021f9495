#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rosa/network.hpp"

// Binary network checkpoint, little-endian throughout:
//
//   "RSA1"  u32 version  u32 layer_count
//   per layer:
//     u8 kind (0 full, 1 lora, 2 rosa, 3 ia3)  u8 activation  u8 scheme  u8 reserved
//     u32 rank  u64 steps_since_factorize  u32 tensor_count
//     per tensor: u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f64
//
// Tensor order per kind:
//   full: weight, original, bias
//   lora: w_frozen, a, b, bias
//   rosa: w_fixed, a, b, w_original, bias
//   ia3:  w_frozen, scale, bias
namespace rosa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Mlp& net);
// Throws FormatError (with byte offset) on any malformed input.
Mlp decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Mlp& net, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);

}  // namespace rosa
