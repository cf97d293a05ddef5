#include "volssl/models.hpp"

#include <cmath>
#include <random>
#include <string>

#include "volssl/error.hpp"

namespace volssl {

namespace {

Tensor kaiming(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f,
                                       static_cast<float>(std::sqrt(gain / static_cast<double>(fan_in))));
  std::vector<float> data(numel(shape));
  for (float& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

const char* const kStageNames[4] = {"conv1", "conv2", "conv3", "conv4"};

}  // namespace

Network::Network(BackboneConfig config, std::size_t outputs, std::uint64_t seed)
    : config_(config), outputs_(outputs) {
  if (config.in_channels == 0 || outputs == 0) {
    throw ValueError("network: channel and output counts must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::size_t in = config.in_channels;
  for (std::size_t out : config.stage_channels) {
    params_.push_back(kaiming({out, in, 3, 3}, in * 9, 2.0, rng));
    params_.push_back(Tensor::zeros({out}, true));
    in = out;
  }
  params_.push_back(kaiming({outputs, in}, in, 1.0, rng));
  params_.push_back(Tensor::zeros({outputs}, true));
}

Network::Features Network::features(Tape& tape, const Tensor& input) const {
  if (input.rank() != 4 || input.dim(1) != config_.in_channels) {
    throw ShapeError("network: expected input [N," + std::to_string(config_.in_channels) +
                     ",H,W], got " + to_string(input.shape()));
  }
  if (input.dim(2) % BackboneConfig::kStride != 0 || input.dim(3) % BackboneConfig::kStride != 0) {
    throw ShapeError("network: input extents " + to_string(input.shape()) +
                     " must be divisible by 16");
  }
  Tensor x = input;
  for (std::size_t s = 0; s < 4; ++s) {
    x = conv2d(tape, x, params_[2 * s], params_[2 * s + 1], 1, 1);
    x = relu(tape, x);
    x = maxpool2d(tape, x, 2);
  }
  Tensor pooled = global_avg_pool(tape, x);
  return {x, pooled};
}

Tensor Network::forward(Tape& tape, const Tensor& input) const {
  const auto f = features(tape, input);
  return linear(tape, f.pooled, params_[8], params_[9]);
}

std::vector<NamedTensor> Network::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t s = 0; s < 4; ++s) {
    out.push_back({std::string(kStageNames[s]) + ".weight", params_[2 * s]});
    out.push_back({std::string(kStageNames[s]) + ".bias", params_[2 * s + 1]});
  }
  out.push_back({"head.weight", params_[8]});
  out.push_back({"head.bias", params_[9]});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Network::save(const std::filesystem::path& path) const {
  save_checkpoint(path, named_parameters());
}

Network Network::from_parameters(const std::vector<NamedTensor>& params) {
  if (params.size() != 10) {
    throw ShapeMismatchError("checkpoint: expected 10 parameter tensors, found " +
                             std::to_string(params.size()));
  }
  const Shape& first = params[0].tensor.shape();
  const Shape& head = params[8].tensor.shape();
  if (first.size() != 4 || head.size() != 2) {
    throw ShapeMismatchError("checkpoint: unexpected layer ranks");
  }
  BackboneConfig cfg;
  cfg.in_channels = first[1];
  for (std::size_t s = 0; s < 4; ++s) {
    const Shape& w = params[2 * s].tensor.shape();
    if (w.size() != 4) throw ShapeMismatchError("checkpoint: conv weight must have rank 4");
    cfg.stage_channels[s] = w[0];
  }
  Network net(cfg, head[0], 0);
  const auto expected = net.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expected[i].name ||
        params[i].tensor.shape() != expected[i].tensor.shape()) {
      throw ShapeMismatchError("checkpoint: parameter '" + params[i].name + "' " +
                               to_string(params[i].tensor.shape()) + " does not match '" +
                               expected[i].name + "' " + to_string(expected[i].tensor.shape()));
    }
    auto dst = net.params_[i].mutable_data();
    std::copy(params[i].tensor.data().begin(), params[i].tensor.data().end(), dst.begin());
  }
  return net;
}

Network Network::load(const std::filesystem::path& path) {
  return from_parameters(load_checkpoint(path));
}

SortNet::SortNet(Network net) : Network(std::move(net)) {
  if (config_.in_channels != 1 || outputs_ != 1) {
    throw ShapeMismatchError("checkpoint holds a " + std::to_string(config_.in_channels) +
                             "-channel, " + std::to_string(outputs_) +
                             "-output network, not a sorting network");
  }
}

SortNet SortNet::load(const std::filesystem::path& path) { return SortNet(Network::load(path)); }

Tensor SortNet::forward_batch(Tape& tape, const SortBatch& batch) const {
  return forward(tape, to_tensor(batch));
}

RotNet::RotNet(Network net) : Network(std::move(net)) {
  if (config_.in_channels != 2) {
    throw ShapeMismatchError("checkpoint holds a " + std::to_string(config_.in_channels) +
                             "-channel network, not a rotation network");
  }
}

RotNet RotNet::load(const std::filesystem::path& path) { return RotNet(Network::load(path)); }

Tensor RotNet::forward_batch(Tape& tape, const RotBatch& batch) const {
  const Tensor x = concat_channels(tape, stack_slices(batch.reference), stack_slices(batch.rotated));
  return forward(tape, x);
}

std::vector<EmbeddingGrid> embed(const SortNet& net, std::span<const Slice2D> slices) {
  Tape tape = Tape::inference();
  const auto f = net.features(tape, stack_slices(slices));
  const std::size_t n = f.map.dim(0), d = f.map.dim(1), rows = f.map.dim(2), cols = f.map.dim(3);
  std::vector<EmbeddingGrid> out(n);
  const auto m = f.map.data();
  for (std::size_t b = 0; b < n; ++b) {
    EmbeddingGrid& g = out[b];
    g.rows = rows;
    g.cols = cols;
    g.dim = d;
    g.vectors.resize(rows * cols * d);
    for (std::size_t ch = 0; ch < d; ++ch) {
      for (std::size_t cell = 0; cell < rows * cols; ++cell) {
        g.vectors[cell * d + ch] = m[(b * d + ch) * rows * cols + cell];
      }
    }
    g.pooled.assign(f.pooled.data().begin() + static_cast<std::ptrdiff_t>(b * d),
                    f.pooled.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * d));
  }
  return out;
}

EmbeddingGrid embed(const SortNet& net, const Slice2D& slice) {
  return embed(net, std::span<const Slice2D>(&slice, 1)).front();
}

}  // namespace volssl
