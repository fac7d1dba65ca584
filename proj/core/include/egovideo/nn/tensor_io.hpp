#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "egovideo/nn/autograd.hpp"

namespace egovideo::nn {

using NamedTensors = std::vector<std::pair<std::string, Matrix>>;

// Versioned container of named float64 tensors:
//   "EGVK" | version u32 | count u32 |
//   count x (name_len u32, name bytes, rows u32, cols u32, rows*cols f64)
// Values are stored verbatim, so a save/load round trip is bit-exact.
inline constexpr uint32_t kTensorContainerVersion = 1;

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::filesystem::path& path);

}  // namespace egovideo::nn
