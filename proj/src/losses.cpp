#include "volssl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "volssl/error.hpp"

namespace volssl {

namespace {

void check_permutation(std::span<const int> ranks, const char* op) {
  std::vector<char> seen(ranks.size(), 0);
  for (int r : ranks) {
    if (r < 0 || static_cast<std::size_t>(r) >= ranks.size() || seen[static_cast<std::size_t>(r)]) {
      throw ValueError(std::string(op) + ": ranks must be a permutation of 0..bs-1");
    }
    seen[static_cast<std::size_t>(r)] = 1;
  }
}

// Ascending-score rank of every element; ties broken by position.
std::vector<int> score_ranks(std::span<const float> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });
  std::vector<int> r(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<int>(i);
  return r;
}

}  // namespace

Tensor margin_ranking_loss(Tape& tape, const Tensor& scores, std::span<const int> ranks,
                           float margin) {
  if (!scores.defined() || scores.size() != ranks.size() ||
      (scores.rank() == 2 && scores.dim(1) != 1) || scores.rank() > 2) {
    throw ShapeError("margin_ranking_loss: scores must be [bs] or [bs,1] matching the ranks");
  }
  if (margin < 0.0f) throw ValueError("margin_ranking_loss: margin must be >= 0");
  check_permutation(ranks, "margin_ranking_loss");
  const std::size_t n = ranks.size();
  const auto f = scores.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double sign = ranks[j] > ranks[i] ? 1.0 : -1.0;
      total += std::max(0.0, margin - sign * (static_cast<double>(f[j]) - f[i]));
    }
  }
  Tensor out = tape.make_output({1}, {static_cast<float>(total)}, {&scores});
  std::vector<int> y(ranks.begin(), ranks.end());
  tape.record(out, [s = Tensor(scores), out, y = std::move(y), margin, n]() mutable {
    const float g = out.grad()[0];
    auto gs = s.mutable_grad();
    const auto f = s.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double sign = y[j] > y[i] ? 1.0 : -1.0;
        // Strictly inside the hinge; zero subgradient at the kink.
        if (margin - sign * (static_cast<double>(f[j]) - f[i]) > 0.0) {
          gs[j] -= static_cast<float>(sign) * g;
          gs[i] += static_cast<float>(sign) * g;
        }
      }
    }
  });
  return out;
}

double mean_displacement(std::span<const float> scores, std::span<const int> ranks) {
  if (scores.size() != ranks.size() || scores.empty()) {
    throw ShapeError("mean_displacement: scores and ranks must be nonempty and equally long");
  }
  const auto xi = score_ranks(scores);
  double acc = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) acc += std::abs(ranks[i] - xi[i]);
  return acc / static_cast<double>(ranks.size());
}

Tensor rotation_nll(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  return softmax_nll(tape, logits, labels);
}

double accuracy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw ShapeError("accuracy: logits must be [N,K] with one label per row");
  }
  const std::size_t k = logits.dim(1);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const float* row = logits.data().data() + r * k;
    const auto best = static_cast<int>(std::max_element(row, row + k) - row);
    hits += best == labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j) + 1.0) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] != 0) rank_sum += mid;
    }
    i = j;
  }
  for (int l : labels) (l != 0 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw ValueError("auroc: both classes must be present");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

}  // namespace volssl
