#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kpat/tensor.hpp"

namespace kpat::nn {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

/// Parameter checkpoint, little-endian:
///   "PATW" | version u32 | count u32 |
///   per tensor: name_len u16 | name | rank u8 | dims u32... | float32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace kpat::nn
