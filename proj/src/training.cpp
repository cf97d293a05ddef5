#include "volssl/training.hpp"

#include <algorithm>
#include <random>

#include "volssl/adam.hpp"
#include "volssl/error.hpp"
#include "volssl/losses.hpp"

namespace volssl {

namespace {

const Volume3D& pick(std::span<const Volume3D> volumes, Rng& rng) {
  if (volumes.empty()) throw ValueError("training: no volumes");
  return volumes[std::uniform_int_distribution<std::size_t>(0, volumes.size() - 1)(rng)];
}

AdamState make_adam(const TrainOptions& opts) {
  AdamState st;
  st.lr = opts.lr;
  return st;
}

}  // namespace

std::vector<StepRecord> train_sort(SortNet& net, std::span<const Volume3D> volumes,
                                   const SamplerConfig& sampler, const TrainOptions& opts,
                                   const StepCallback& on_step) {
  Sampler s(sampler, opts.seed);
  AdamState adam = make_adam(opts);
  std::vector<StepRecord> log;
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    const SortBatch batch = s.sort_batch(pick(volumes, s.rng()));
    Tape tape;
    const Tensor scores = net.forward_batch(tape, batch);
    const Tensor loss = margin_ranking_loss(tape, scores, batch.ranks, opts.margin);
    net.zero_grad();
    tape.backward(loss);
    adam_step(net.parameters(), adam);
    const StepRecord rec{step, loss.item(), mean_displacement(scores.data(), batch.ranks)};
    log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return log;
}

std::vector<StepRecord> train_rot(RotNet& net, std::span<const Volume3D> volumes,
                                  const SamplerConfig& sampler, const TrainOptions& opts,
                                  const StepCallback& on_step) {
  if (sampler.angles.size() != net.num_classes()) {
    throw ShapeError("train_rot: angle table has " + std::to_string(sampler.angles.size()) +
                     " entries but the network predicts " + std::to_string(net.num_classes()));
  }
  Sampler s(sampler, opts.seed);
  AdamState adam = make_adam(opts);
  std::vector<StepRecord> log;
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    const RotBatch batch = s.rot_batch(pick(volumes, s.rng()));
    Tape tape;
    const Tensor logits = net.forward_batch(tape, batch);
    const Tensor loss = rotation_nll(tape, logits, batch.labels);
    net.zero_grad();
    tape.backward(loss);
    adam_step(net.parameters(), adam);
    const StepRecord rec{step, loss.item(), accuracy(logits, batch.labels)};
    log.push_back(rec);
    if (on_step) on_step(rec);
  }
  return log;
}

EvalResult evaluate_sort(const SortNet& net, std::span<const Volume3D> volumes,
                         const SamplerConfig& sampler, std::size_t batches_per_volume,
                         std::uint64_t seed, float margin) {
  Sampler s(sampler, seed);
  EvalResult r;
  for (const auto& vol : volumes) {
    for (std::size_t b = 0; b < batches_per_volume; ++b) {
      const SortBatch batch = s.sort_batch(vol);
      Tape tape = Tape::inference();
      const Tensor scores = net.forward_batch(tape, batch);
      r.loss += margin_ranking_loss(tape, scores, batch.ranks, margin).item();
      r.metric += mean_displacement(scores.data(), batch.ranks);
      ++r.batches;
    }
  }
  if (r.batches) {
    r.loss /= static_cast<double>(r.batches);
    r.metric /= static_cast<double>(r.batches);
  }
  return r;
}

EvalResult evaluate_rot(const RotNet& net, std::span<const Volume3D> volumes,
                        const SamplerConfig& sampler, std::size_t batches_per_volume,
                        std::uint64_t seed, std::span<const BBox3D> object_boxes) {
  if (!object_boxes.empty() && object_boxes.size() != volumes.size()) {
    throw ValueError("evaluate_rot: need one object box per volume");
  }
  Sampler s(sampler, seed);
  EvalResult r;
  std::size_t hits = 0;
  for (std::size_t v = 0; v < volumes.size(); ++v) {
    for (std::size_t b = 0; b < batches_per_volume; ++b) {
      const RotBatch batch = s.rot_batch(volumes[v]);
      Tape tape = Tape::inference();
      const Tensor logits = net.forward_batch(tape, batch);
      r.loss += rotation_nll(tape, logits, batch.labels).item();
      r.metric += accuracy(logits, batch.labels);
      ++r.batches;
      if (object_boxes.empty()) continue;
      const Interval span = object_boxes[v].axes[static_cast<std::size_t>(batch.axis)];
      const std::size_t k = logits.dim(1);
      const auto lg = logits.data();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.indices[i] < span.lo || batch.indices[i] >= span.hi) continue;
        const auto row = lg.subspan(i * k, k);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        hits += best == batch.labels[i];
        ++r.object_pairs;
      }
    }
  }
  if (r.batches) {
    r.loss /= static_cast<double>(r.batches);
    r.metric /= static_cast<double>(r.batches);
  }
  if (r.object_pairs) r.object_metric = static_cast<double>(hits) / static_cast<double>(r.object_pairs);
  return r;
}

}  // namespace volssl
