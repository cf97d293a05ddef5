#pragma once

// Run configuration: UTF-8 lines of `key = value`; `#` starts a comment.
// Unknown keys are rejected.
//
//   task = sort | rot
//   seed, steps, lr, margin
//   batch_size, slice_dist (uniform | normal), slice_mean, slice_std
//   offset (rotation neighbor half-width s), angles (comma list, degrees)
//   axis (0 | 1 | 2 | any), mask_sort_slices, flips, intensity_jitter
//   channels (four comma-separated stage widths)
//   train, test (comma lists of VVOL1 paths, relative to the config file)
//   eval_batches, log (CSV path; default: checkpoint path + ".log.csv")

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "volssl/sampling.hpp"
#include "volssl/training.hpp"

namespace volssl {

enum class Task { Sort, Rot };

struct RunConfig {
  Task task = Task::Sort;
  SamplerConfig sampler;
  TrainOptions train;
  std::array<std::size_t, 4> channels{16, 32, 64, 64};
  std::vector<std::filesystem::path> train_volumes;
  std::vector<std::filesystem::path> test_volumes;
  std::size_t eval_batches = 20;
  std::filesystem::path log;

  // Throws ConfigError unless bs >= 2, steps >= 1, volumes are listed and exist.
  void validate() const;
};

// `base` resolves relative volume paths.
RunConfig parse_config(std::istream& in, const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace volssl
