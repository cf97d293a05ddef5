#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "volssl/checkpoint.hpp"
#include "volssl/sampling.hpp"
#include "volssl/tensor.hpp"
#include "volssl/volume.hpp"

namespace volssl {

// Four stages of (3x3 conv, relu, 2x2 max pool), then global average pooling.
struct BackboneConfig {
  std::size_t in_channels = 1;
  std::array<std::size_t, 4> stage_channels{16, 32, 64, 64};

  std::size_t embedding_dim() const { return stage_channels.back(); }
  static constexpr std::size_t kStride = 16;  // input pixels per feature-map cell
};

class Network {
 public:
  struct Features {
    Tensor map;     // [N, D, H/16, W/16]
    Tensor pooled;  // [N, D]
  };

  Network(BackboneConfig config, std::size_t outputs, std::uint64_t seed);

  const BackboneConfig& config() const { return config_; }
  std::size_t outputs() const { return outputs_; }

  Features features(Tape& tape, const Tensor& input) const;
  // [N, outputs]
  Tensor forward(Tape& tape, const Tensor& input) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<NamedTensor> named_parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  void save(const std::filesystem::path& path) const;
  // Builds a network whose architecture matches the checkpoint.
  static Network load(const std::filesystem::path& path);
  static Network from_parameters(const std::vector<NamedTensor>& params);

 protected:
  BackboneConfig config_;
  std::size_t outputs_ = 0;
  std::vector<Tensor> params_;
};

// Single-channel backbone with a scalar ranking head.
class SortNet : public Network {
 public:
  explicit SortNet(std::uint64_t seed, std::array<std::size_t, 4> stages = {16, 32, 64, 64})
      : Network({1, stages}, 1, seed) {}
  explicit SortNet(Network net);

  // [bs,1] scores.
  Tensor forward_batch(Tape& tape, const SortBatch& batch) const;
  static SortNet load(const std::filesystem::path& path);
};

// Two-channel backbone with one logit per angle-table entry.
class RotNet : public Network {
 public:
  RotNet(std::size_t num_angles, std::uint64_t seed,
         std::array<std::size_t, 4> stages = {16, 32, 64, 64})
      : Network({2, stages}, num_angles, seed) {}
  explicit RotNet(Network net);

  std::size_t num_classes() const { return outputs_; }
  // [bs, |A|] logits.
  Tensor forward_batch(Tape& tape, const RotBatch& batch) const;
  static RotNet load(const std::filesystem::path& path);
};

// Superpixel embeddings of one input: a grid of D-dimensional vectors, each
// covering a 16x16 input patch, plus their mean.
struct EmbeddingGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t dim = 0;
  std::vector<float> vectors;  // [rows*cols, dim], row-major grid order
  std::vector<float> pooled;   // [dim]

  std::span<const float> at(std::size_t r, std::size_t c) const {
    return std::span<const float>(vectors).subspan((r * cols + c) * dim, dim);
  }
};

EmbeddingGrid embed(const SortNet& net, const Slice2D& slice);
// Batched variant: one grid per slice.
std::vector<EmbeddingGrid> embed(const SortNet& net, std::span<const Slice2D> slices);

}  // namespace volssl
