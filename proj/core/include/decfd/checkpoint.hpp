#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "decfd/tensor.hpp"

namespace decfd::nn {

enum class Dtype : std::uint8_t { f32 = 0, f64 = 1 };

struct NamedTensor {
    std::string name;
    Tensor tensor;
    Dtype dtype = Dtype::f64;
};

/// Binary checkpoint format, little-endian throughout:
///   magic "DCFD", format version u32, tensor count u32, then per tensor:
///   name length u16 + UTF-8 name, rank u8, dims as u64s, dtype tag u8
///   (0 = f32, 1 = f64), raw element data.
/// save(load(path)) writes byte-identical files.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace decfd::nn
