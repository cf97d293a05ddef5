#include "volssl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "volssl/error.hpp"

namespace volssl {

namespace {

Slice2D flipped(const Slice2D& s, bool vertical, bool horizontal) {
  if (!vertical && !horizontal) return s;
  Slice2D out(s.height(), s.width());
  for (std::size_t r = 0; r < s.height(); ++r) {
    const std::size_t sr = vertical ? s.height() - 1 - r : r;
    for (std::size_t c = 0; c < s.width(); ++c) {
      out.at(r, c) = s.at(sr, horizontal ? s.width() - 1 - c : c);
    }
  }
  return out;
}

void jitter(Slice2D& s, float gain, float offset) {
  for (float& v : s.data()) v = v * gain + offset;
}

int pick_axis(const SamplerConfig& cfg, Rng& rng) {
  if (cfg.axis != kAnyAxis) return cfg.axis;
  return std::uniform_int_distribution<int>(0, 2)(rng);
}

}  // namespace

void SamplerConfig::validate() const {
  if (batch_size < 2) throw ValueError("sampler: batch size must be >= 2");
  if (offset_halfwidth < 0) throw ValueError("sampler: offset half-width must be >= 0");
  if (angles.empty()) throw ValueError("sampler: angle table is empty");
  if (std::set<double>(angles.begin(), angles.end()).size() != angles.size()) {
    throw ValueError("sampler: angle table entries must be distinct");
  }
  if (axis != kAnyAxis && (axis < 0 || axis > 2)) throw ValueError("sampler: bad slicing axis");
  if (slice_dist.kind == SliceDistribution::Kind::Normal && !(slice_dist.stddev > 0.0)) {
    throw ValueError("sampler: normal slice distribution needs stddev > 0");
  }
}

std::size_t draw_slice_index(const SliceDistribution& dist, std::size_t extent, Rng& rng) {
  if (extent == 0) throw ValueError("sampler: empty axis");
  if (dist.kind == SliceDistribution::Kind::Uniform) {
    return std::uniform_int_distribution<std::size_t>(0, extent - 1)(rng);
  }
  const double l = static_cast<double>(extent);
  std::normal_distribution<double> normal(dist.mean * l, dist.stddev * l);
  const double v = std::round(normal(rng));
  return static_cast<std::size_t>(std::clamp(v, 0.0, l - 1.0));
}

std::vector<int> ranks_of(std::span<const std::size_t> values) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] < values[b]; });
  std::vector<int> ranks(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r);
  return ranks;
}

SortBatch sample_sort_batch(const Volume3D& vol, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  SortBatch batch;
  batch.axis = pick_axis(cfg, rng);
  const std::size_t l = vol.extent(batch.axis);
  if (l < cfg.batch_size) {
    throw ValueError("sample_sort_batch: slicing extent " + std::to_string(l) +
                     " is smaller than the batch size " + std::to_string(cfg.batch_size));
  }
  std::set<std::size_t> seen;
  while (batch.indices.size() < cfg.batch_size) {
    const std::size_t idx = draw_slice_index(cfg.slice_dist, l, rng);
    if (seen.insert(idx).second) batch.indices.push_back(idx);
  }
  batch.ranks = ranks_of(batch.indices);

  float gain = 1.0f, offset = 0.0f;
  if (cfg.augment.intensity_jitter > 0.0f) {
    std::uniform_real_distribution<float> u(-cfg.augment.intensity_jitter,
                                            cfg.augment.intensity_jitter);
    gain += u(rng);
    offset = u(rng);
  }
  for (std::size_t idx : batch.indices) {
    Slice2D s = slice_at(vol, batch.axis, idx);
    if (cfg.mask_sort_slices) s = incircle_mask(s);
    if (cfg.augment.intensity_jitter > 0.0f) jitter(s, gain, offset);
    batch.slices.push_back(std::move(s));
  }
  return batch;
}

std::pair<Slice2D, Slice2D> make_rotation_pair(const Slice2D& reference, const Slice2D& neighbor,
                                               double angle_deg) {
  return {incircle_mask(reference), incircle_mask(rotate_slice(neighbor, angle_deg))};
}

RotBatch sample_rot_batch(const Volume3D& vol, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  RotBatch batch;
  batch.axis = pick_axis(cfg, rng);
  const std::size_t l = vol.extent(batch.axis);
  if (l < 2) throw ValueError("sample_rot_batch: slicing extent must be >= 2");
  std::uniform_int_distribution<int> offset(-cfg.offset_halfwidth, cfg.offset_halfwidth);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(cfg.angles.size()) - 1);
  std::uniform_real_distribution<float> jit(-cfg.augment.intensity_jitter,
                                            cfg.augment.intensity_jitter);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::size_t idx = draw_slice_index(cfg.slice_dist, l, rng);
    const long nb = std::clamp(static_cast<long>(idx) + offset(rng), 0L, static_cast<long>(l) - 1);
    const int c = cls(rng);
    Slice2D ref = slice_at(vol, batch.axis, idx);
    Slice2D nbr = slice_at(vol, batch.axis, static_cast<std::size_t>(nb));
    if (cfg.augment.flips) {
      const bool v = coin(rng), h = coin(rng);
      ref = flipped(ref, v, h);
      nbr = flipped(nbr, v, h);
    }
    auto [a, r] = make_rotation_pair(ref, nbr, cfg.angles[static_cast<std::size_t>(c)]);
    if (cfg.augment.intensity_jitter > 0.0f) {
      const float gain = 1.0f + jit(rng), off = jit(rng);
      jitter(a, gain, off);
      jitter(r, gain, off);
    }
    batch.reference.push_back(std::move(a));
    batch.rotated.push_back(std::move(r));
    batch.labels.push_back(c);
    batch.indices.push_back(idx);
    batch.neighbors.push_back(static_cast<std::size_t>(nb));
  }
  return batch;
}

Tensor stack_slices(std::span<const Slice2D> slices) {
  if (slices.empty()) throw ShapeError("stack_slices: no slices");
  const std::size_t h = slices[0].height(), w = slices[0].width();
  std::vector<float> data;
  data.reserve(slices.size() * h * w);
  for (const auto& s : slices) {
    if (s.height() != h || s.width() != w) throw ShapeError("stack_slices: slice extents differ");
    data.insert(data.end(), s.data().begin(), s.data().end());
  }
  return Tensor::from_data({slices.size(), 1, h, w}, std::move(data));
}

Tensor to_tensor(const SortBatch& batch) { return stack_slices(batch.slices); }

Tensor to_tensor(const RotBatch& batch) {
  if (batch.reference.empty() || batch.reference.size() != batch.rotated.size()) {
    throw ShapeError("to_tensor: malformed rotation batch");
  }
  const std::size_t h = batch.reference[0].height(), w = batch.reference[0].width();
  std::vector<float> data;
  data.reserve(batch.size() * 2 * h * w);
  for (std::size_t b = 0; b < batch.reference.size(); ++b) {
    for (const Slice2D* s : {&batch.reference[b], &batch.rotated[b]}) {
      if (s->height() != h || s->width() != w) throw ShapeError("to_tensor: slice extents differ");
      data.insert(data.end(), s->data().begin(), s->data().end());
    }
  }
  return Tensor::from_data({batch.reference.size(), 2, h, w}, std::move(data));
}

}  // namespace volssl
