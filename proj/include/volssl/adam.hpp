#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "volssl/tensor.hpp"

namespace volssl {

// Adam with bias-corrected moments. m and v are sized lazily on the first
// step to match the parameter list.
struct AdamState {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::int64_t t = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// One update using the gradients stored on `params` (a parameter without a
// gradient is treated as having a zero gradient).
void adam_step(std::span<Tensor> params, AdamState& state);

// Same update with explicit gradients, one buffer per parameter.
void adam_step(std::span<Tensor> params, std::span<const std::span<const float>> grads,
               AdamState& state);

}  // namespace volssl
