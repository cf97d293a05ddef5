#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "volssl/tensor.hpp"
#include "volssl/volume.hpp"

namespace volssl {

using Rng = std::mt19937_64;

// Distribution of slice indices along an axis of extent l.
struct SliceDistribution {
  enum class Kind { Uniform, Normal };
  Kind kind = Kind::Uniform;
  // Normal parameters as fractions of l, i.e. N(mean * l, stddev * l).
  double mean = 0.5;
  double stddev = 0.2;

  static SliceDistribution uniform() { return {}; }
  static SliceDistribution normal(double mean, double stddev) {
    return {Kind::Normal, mean, stddev};
  }
};

struct Augmentation {
  // Random horizontal/vertical flips, applied identically to both slices of
  // a rotation pair before the rotation. Never applied to sorting batches.
  bool flips = false;
  // Global gain/offset jitter: x * (1 + u1) + u2, u ~ U(-j, j), per sample.
  float intensity_jitter = 0.0f;
};

inline constexpr int kAnyAxis = -1;

struct SamplerConfig {
  std::size_t batch_size = 12;
  SliceDistribution slice_dist;
  int offset_halfwidth = 100;  // neighbor offsets drawn from U(-s, s)
  std::vector<double> angles{-90, -60, -30, 0, 30, 60, 90};
  int axis = 0;                // kAnyAxis picks an axis per batch
  bool mask_sort_slices = false;
  Augmentation augment;

  void validate() const;
};

struct SortBatch {
  int axis = 0;
  std::vector<Slice2D> slices;
  std::vector<int> ranks;             // permutation of 0..bs-1, rank of indices[i]
  std::vector<std::size_t> indices;   // source slice indices
};

struct RotBatch {
  int axis = 0;
  std::vector<Slice2D> reference;     // masked reference slices
  std::vector<Slice2D> rotated;       // masked, rotated neighbor slices
  std::vector<int> labels;            // index into the angle table
  std::vector<std::size_t> indices;
  std::vector<std::size_t> neighbors;

  std::size_t size() const { return labels.size(); }
};

std::size_t draw_slice_index(const SliceDistribution& dist, std::size_t extent, Rng& rng);

// Rank of each value among all values (smallest -> 0). Values must be distinct.
std::vector<int> ranks_of(std::span<const std::size_t> values);

SortBatch sample_sort_batch(const Volume3D& vol, const SamplerConfig& cfg, Rng& rng);
RotBatch sample_rot_batch(const Volume3D& vol, const SamplerConfig& cfg, Rng& rng);

// Masked pair (reference, rotate(neighbor, angle)) as used by RotBatch.
std::pair<Slice2D, Slice2D> make_rotation_pair(const Slice2D& reference, const Slice2D& neighbor,
                                               double angle_deg);

// [bs,1,H,W] and [bs,2,H,W] network inputs.
Tensor to_tensor(const SortBatch& batch);
Tensor to_tensor(const RotBatch& batch);
Tensor stack_slices(std::span<const Slice2D> slices);

// Owns its random state; one per worker.
class Sampler {
 public:
  Sampler(SamplerConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
  }

  SortBatch sort_batch(const Volume3D& vol) { return sample_sort_batch(vol, cfg_, rng_); }
  RotBatch rot_batch(const Volume3D& vol) { return sample_rot_batch(vol, cfg_, rng_); }

  const SamplerConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }

 private:
  SamplerConfig cfg_;
  Rng rng_;
};

}  // namespace volssl
