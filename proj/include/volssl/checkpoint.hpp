#pragma once

// VCKP1 parameter files:
//   "VCKP1\n"
//   one JSON line: [{"name": ..., "shape": [...]}, ...]
//   raw little-endian float32 buffers, concatenated in list order.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "volssl/tensor.hpp"

namespace volssl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace volssl
