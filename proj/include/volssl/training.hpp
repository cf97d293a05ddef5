#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "volssl/models.hpp"
#include "volssl/sampling.hpp"
#include "volssl/volume.hpp"

namespace volssl {

struct TrainOptions {
  std::size_t steps = 1000;
  float lr = 1e-3f;
  float margin = 0.1f;  // sorting loss only
  std::uint64_t seed = 0;
};

// metric: mean displacement (sorting) or batch accuracy (rotation).
struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double metric = 0.0;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Each step draws one training volume uniformly and one batch from it.
std::vector<StepRecord> train_sort(SortNet& net, std::span<const Volume3D> volumes,
                                   const SamplerConfig& sampler, const TrainOptions& opts,
                                   const StepCallback& on_step = {});
std::vector<StepRecord> train_rot(RotNet& net, std::span<const Volume3D> volumes,
                                  const SamplerConfig& sampler, const TrainOptions& opts,
                                  const StepCallback& on_step = {});

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
  std::size_t batches = 0;
  // Rotation only, when object boxes are given: accuracy over the pairs whose
  // reference slice crosses the object.
  double object_metric = 0.0;
  std::size_t object_pairs = 0;
};

// Averages over `batches_per_volume` freshly sampled batches per volume.
EvalResult evaluate_sort(const SortNet& net, std::span<const Volume3D> volumes,
                         const SamplerConfig& sampler, std::size_t batches_per_volume,
                         std::uint64_t seed, float margin = 0.1f);
EvalResult evaluate_rot(const RotNet& net, std::span<const Volume3D> volumes,
                        const SamplerConfig& sampler, std::size_t batches_per_volume,
                        std::uint64_t seed, std::span<const BBox3D> object_boxes = {});

}  // namespace volssl
