#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "volssl/adam.hpp"
#include "volssl/error.hpp"
#include "volssl/losses.hpp"
#include "volssl/tensor.hpp"

using namespace volssl;

namespace {

constexpr int kSeeds = 20;
using gradcheck::random_tensor;

void expect_fd(const ref::FdResult& r, const std::string& name) {
  EXPECT_GT(r.checked, 0u) << name;
  EXPECT_LT(r.max_rel, gradcheck::kTol) << name << ": checked " << r.checked << " skipped " << r.skipped;
  EXPECT_LE(r.skipped * 10, r.checked + r.skipped) << name << ": too many kinks";
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  Tape tape;
  const Tensor x = random_tensor({2, 1, 5, 5}, rng, false);
  const Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0f});
  const Tensor b = Tensor::zeros({1});
  const Tensor y = conv2d(tape, x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OnesKernelSumsWindow) {
  Tape tape;
  const Tensor x = Tensor::from_data({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  const Tensor w = Tensor::from_data({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
  const Tensor y = conv2d(tape, x, w, Tensor::zeros({1}), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0f);
}

TEST(Conv2d, SamePaddingKeepsExtents) {
  std::mt19937_64 rng(2);
  Tape tape;
  for (std::size_t k : {1u, 3u, 5u}) {
    const Tensor x = random_tensor({1, 2, 9, 7}, rng, false);
    const Tensor w = random_tensor({3, 2, k, k}, rng, false);
    const Tensor y = conv2d(tape, x, w, Tensor::zeros({3}), 1, static_cast<int>(k / 2));
    EXPECT_EQ(y.shape(), (Shape{1, 3, 9, 7}));
  }
}

TEST(Conv2d, OutputExtentFormula) {
  std::mt19937_64 rng(3);
  Tape tape;
  const Tensor x = random_tensor({1, 1, 10, 9}, rng, false);
  const Tensor w = random_tensor({2, 1, 3, 3}, rng, false);
  const Tensor y = conv2d(tape, x, w, Tensor::zeros({2}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 5, 5}));
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  Tape tape;
  const Tensor x = Tensor::zeros({1, 2, 5, 5});
  try {
    conv2d(tape, x, Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(tape, x, Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({2}), 1, 0), ShapeError);
  EXPECT_THROW(conv2d(tape, x, Tensor::zeros({1, 2, 7, 7}), Tensor::zeros({1}), 1, 0), ShapeError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  for (const auto& c : gradcheck::conv2d(kSeeds)) expect_fd(c.result, c.name);
}

TEST(Relu, Values) {
  Tape tape;
  const Tensor y = relu(tape, Tensor::from_data({2}, {-1.0f, 2.0f}));
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 2.0f);
}

TEST(Relu, GradientMatchesFiniteDifferences) {
  expect_fd(gradcheck::relu(kSeeds), "relu");
}

TEST(MaxPool, PicksWindowMaximumAndDropsRemainder) {
  Tape tape;
  std::vector<float> v(5 * 5);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  const Tensor y = maxpool2d(tape, Tensor::from_data({1, 1, 5, 5}, v), 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.data()[0], 6.0f);
  EXPECT_EQ(y.data()[1], 8.0f);
  EXPECT_EQ(y.data()[2], 16.0f);
  EXPECT_EQ(y.data()[3], 18.0f);
}

TEST(MaxPool, GradientMatchesFiniteDifferences) {
  expect_fd(gradcheck::maxpool(kSeeds), "maxpool");
}

TEST(GlobalAvgPool, GradientMatchesFiniteDifferences) {
  expect_fd(gradcheck::global_avg_pool(kSeeds), "global_avg_pool");
}

TEST(Linear, GradientMatchesFiniteDifferences) {
  for (const auto& c : gradcheck::linear(kSeeds)) expect_fd(c.result, c.name);
}

TEST(ConcatChannels, FirstChannelIsBitEqual) {
  std::mt19937_64 rng(6);
  Tape tape;
  const Tensor a = random_tensor({2, 1, 4, 4}, rng, false), b = random_tensor({2, 1, 4, 4}, rng, false);
  const Tensor y = concat_channels(tape, a, b);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 4, 4}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_EQ(y.data()[n * 32 + i], a.data()[n * 16 + i]);
      EXPECT_EQ(y.data()[n * 32 + 16 + i], b.data()[n * 16 + i]);
    }
}

TEST(ConcatChannels, GradientMatchesFiniteDifferences) {
  for (const auto& c : gradcheck::concat_channels(kSeeds)) expect_fd(c.result, c.name);
}

TEST(SoftmaxNll, UniformLogitsGiveLogK) {
  Tape tape;
  const std::vector<int> labels{0, 3, 6};
  const Tensor loss = softmax_nll(tape, Tensor::zeros({3, 7}), labels);
  EXPECT_NEAR(loss.item(), std::log(7.0), 1e-6);
}

TEST(SoftmaxNll, LabelOutOfRangeThrows) {
  Tape tape;
  const std::vector<int> bad{7};
  EXPECT_THROW(softmax_nll(tape, Tensor::zeros({1, 7}), bad), ValueError);
  const std::vector<int> neg{-1};
  EXPECT_THROW(softmax_nll(tape, Tensor::zeros({1, 7}), neg), ValueError);
}

TEST(SoftmaxNll, GradientMatchesFiniteDifferences) {
  expect_fd(gradcheck::softmax_nll(kSeeds), "softmax_nll");
}

TEST(AddMul, GradientsMatchFiniteDifferences) {
  for (const auto& c : gradcheck::add_mul(kSeeds)) expect_fd(c.result, c.name);
}

TEST(MarginLoss, GradientMatchesFiniteDifferences) {
  expect_fd(gradcheck::margin_loss(kSeeds), "margin_loss");
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from_data({2, 3}, std::vector<float>(6, 0.5f), true);
  Tape tape;
  tape.backward(sum(tape, x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SquareGivesTwoX) {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  Tape tape;
  tape.backward(sum(tape, mul(tape, x, x)));
  EXPECT_EQ(x.grad()[0], 2.0f);
  EXPECT_EQ(x.grad()[1], 4.0f);
}

TEST(Backward, RepeatedCallsAccumulate) {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  Tape tape;
  const Tensor loss = sum(tape, mul(tape, x, x));
  tape.backward(loss);
  tape.backward(loss);
  EXPECT_EQ(x.grad()[0], 4.0f);
  EXPECT_EQ(x.grad()[1], 8.0f);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0f);
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  Tape tape;
  const Tensor y = mul(tape, x, x);
  EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, LinearInTheLoss) {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  const std::vector<int> labels{0, 2, 3};
  auto loss_a = [&](Tape& t) { return softmax_nll(t, linear(t, x, w, b), labels); };
  auto loss_b = [&](Tape& t) { return sum(t, relu(t, linear(t, x, w, b))); };

  std::vector<float> ga, gb;
  {
    Tape t;
    t.backward(loss_a(t));
    ga.assign(w.grad().begin(), w.grad().end());
    w.zero_grad();
  }
  {
    Tape t;
    t.backward(loss_b(t));
    gb.assign(w.grad().begin(), w.grad().end());
    w.zero_grad();
  }
  Tape t;
  t.backward(add(t, loss_a(t), loss_b(t)));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w.grad()[i], ga[i] + gb[i], 1e-5);
}

TEST(Tape, InferenceRecordsNothing) {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  Tape tape = Tape::inference();
  const Tensor y = sum(tape, mul(tape, x, x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_FALSE(y.needs_grad());
}

TEST(Tape, OpsAppearAfterTheirInputs) {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  Tape tape;
  const Tensor a = mul(tape, x, x);
  const Tensor b = add(tape, a, x);
  sum(tape, b);
  EXPECT_EQ(tape.size(), 3u);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
  p.mutable_grad();
  AdamState st;
  std::vector<Tensor> params{p};
  adam_step(params, st);
  EXPECT_EQ(p.data()[0], 1.0f);
  EXPECT_EQ(p.data()[1], -2.0f);
  EXPECT_EQ(p.data()[2], 0.5f);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, FirstStepIsLearningRate) {
  Tensor p = Tensor::from_data({1}, {0.0f}, true);
  p.mutable_grad()[0] = 1.0f;
  AdamState st;
  st.lr = 0.1f;
  std::vector<Tensor> params{p};
  adam_step(params, st);
  const double expected = -0.1 * (1.0 / (1.0 + 1e-8));
  EXPECT_NEAR(p.data()[0], expected, 1e-7);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroBetasReduceToScaledSignStep) {
  // beta1 = beta2 = 0: m = g, v = g^2, so the step is -lr * g / (|g| + eps).
  Tensor p = Tensor::from_data({3}, {1.0f, 1.0f, 1.0f}, true);
  const std::vector<float> g{0.5f, -2.0f, 1e-3f};
  std::copy(g.begin(), g.end(), p.mutable_grad().begin());
  AdamState st;
  st.lr = 0.01f;
  st.beta1 = 0.0f;
  st.beta2 = 0.0f;
  st.eps = 0.25f;
  std::vector<Tensor> params{p};
  adam_step(params, st);
  for (std::size_t i = 0; i < 3; ++i) {
    const double step = 0.01 * g[i] / (std::abs(static_cast<double>(g[i])) + 0.25);
    EXPECT_NEAR(p.data()[i], 1.0 - step, 1e-7);
  }
}

TEST(Adam, StepCountAdvancesByOne) {
  Tensor p = Tensor::from_data({1}, {0.0f}, true);
  AdamState st;
  std::vector<Tensor> params{p};
  for (int i = 1; i <= 5; ++i) {
    p.mutable_grad()[0] = 1.0f;
    adam_step(params, st);
    EXPECT_EQ(st.t, i);
  }
}

TEST(Adam, ShapeMismatchThrows) {
  Tensor p = Tensor::zeros({3}, true);
  std::vector<Tensor> params{p};
  const std::vector<float> g(2, 1.0f);
  const std::vector<std::span<const float>> grads{g};
  AdamState st;
  EXPECT_THROW(adam_step(params, grads, st), ShapeError);
}

TEST(Adam, DeterministicOverHundredSteps) {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tensor w = random_tensor({4, 3}, rng), b = random_tensor({4}, rng);
    const Tensor x = random_tensor({5, 3}, rng, false);
    const std::vector<int> labels{0, 1, 2, 3, 1};
    AdamState st;
    std::vector<Tensor> params{w, b};
    for (int i = 0; i < 100; ++i) {
      w.zero_grad();
      b.zero_grad();
      Tape t;
      t.backward(softmax_nll(t, linear(t, x, w, b), labels));
      adam_step(params, st);
    }
    std::vector<float> out(w.data().begin(), w.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
