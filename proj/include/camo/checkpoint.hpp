#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

// Named-tensor checkpoint. Binary layout (little-endian):
//   magic "CAMOTNS1"
//   u64 tensor count
//   per tensor: u32 name length, name bytes, u32 ndim, i64 dims..., f64 values
// Round-trips bit-exactly.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path);

// Same layout preceded by a free-form metadata string (config header):
//   magic "CAMOCKP1", u64 meta length, meta bytes, tensor block as above.
void save_checkpoint(const std::filesystem::path& path, const std::string& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::pair<std::string, std::vector<std::pair<std::string, Tensor>>> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace camo
