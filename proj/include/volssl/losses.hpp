#pragma once

#include <span>
#include <vector>

#include "volssl/tensor.hpp"

namespace volssl {

// Pairwise hinge over unordered pairs i < j:
//   sum max(0, m - sign(y_j - y_i) * (f_j - f_i))
// Scores ascend with rank. `scores` is [bs] or [bs,1]; ranks must be a permutation.
Tensor margin_ranking_loss(Tape& tape, const Tensor& scores, std::span<const int> ranks,
                           float margin);

// Mean |y_i - xi_i| where xi ranks the scores ascending.
double mean_displacement(std::span<const float> scores, std::span<const int> ranks);

// Mean negative log-likelihood of the labelled class under softmax(logits).
Tensor rotation_nll(Tape& tape, const Tensor& logits, std::span<const int> labels);

// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor& logits, std::span<const int> labels);

// P(score of a random positive > score of a random negative), ties count 1/2.
double auroc(std::span<const double> scores, std::span<const int> labels);

}  // namespace volssl
