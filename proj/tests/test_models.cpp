#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "volssl/checkpoint.hpp"
#include "volssl/error.hpp"
#include "volssl/losses.hpp"
#include "volssl/models.hpp"
#include "volssl/phantom.hpp"
#include "volssl/training.hpp"

using namespace volssl;
namespace fs = std::filesystem;

namespace {

using gradcheck::random_slices;

void expect_network_fd(const ref::FdResult& r) {
  EXPECT_GE(r.checked, 20u * 10u);
  EXPECT_LT(r.max_rel, gradcheck::kTol) << "checked " << r.checked << " skipped " << r.skipped;
  EXPECT_LE(r.skipped * 10, r.checked + r.skipped);
  std::cout << "max " << r.max_rel << " checked " << r.checked << " skipped " << r.skipped << "\n";
}

}  // namespace

TEST(SortNet, OutputShapeAndDeterminism) {
  std::mt19937_64 rng(1);
  SortNet net(3);
  auto slices = random_slices(12, 64, rng);
  slices[5] = slices[2];
  SortBatch b;
  b.slices = slices;
  Tape tape = Tape::inference();
  const Tensor y = net.forward_batch(tape, b);
  EXPECT_EQ(y.shape(), (Shape{12, 1}));
  EXPECT_EQ(y.data()[5], y.data()[2]);
  const Tensor y2 = net.forward_batch(tape, b);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(y.data()[i], y2.data()[i]);
}

TEST(SortNet, RejectsExtentsNotDivisibleBySixteen) {
  SortNet net(3);
  Tape tape = Tape::inference();
  EXPECT_THROW(net.forward(tape, Tensor::zeros({1, 1, 40, 40})), ShapeError);
  EXPECT_THROW(net.forward(tape, Tensor::zeros({1, 2, 32, 32})), ShapeError);
}

TEST(RotNet, OutputShapeAndRowPermutation) {
  std::mt19937_64 rng(2);
  RotNet net(7, 4);
  RotBatch b;
  b.reference = random_slices(5, 32, rng);
  b.rotated = random_slices(5, 32, rng);
  b.labels = {0, 1, 2, 3, 4};
  Tape tape = Tape::inference();
  const Tensor y = net.forward_batch(tape, b);
  EXPECT_EQ(y.shape(), (Shape{5, 7}));
  RotBatch p = b;
  std::swap(p.reference[0], p.reference[3]);
  std::swap(p.rotated[0], p.rotated[3]);
  const Tensor z = net.forward_batch(tape, p);
  for (std::size_t k = 0; k < 7; ++k) {
    EXPECT_EQ(z.data()[0 * 7 + k], y.data()[3 * 7 + k]);
    EXPECT_EQ(z.data()[3 * 7 + k], y.data()[0 * 7 + k]);
    EXPECT_EQ(z.data()[1 * 7 + k], y.data()[1 * 7 + k]);
  }
}

TEST(Network, ParameterCountIndependentOfSeed) {
  EXPECT_EQ(SortNet(1).parameter_count(), SortNet(2).parameter_count());
  EXPECT_EQ(RotNet(7, 1).parameter_count(), RotNet(7, 9).parameter_count());
  // 1->16->32->64->64 3x3 convs with biases, then a 64->1 head.
  const std::size_t sort = (16 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 * 9 + 64) + (64 * 64 * 9 + 64) + 64 + 1;
  EXPECT_EQ(SortNet(1).parameter_count(), sort);
}

TEST(Network, GradientMatchesFiniteDifferencesSort) { expect_network_fd(gradcheck::sort_network(20)); }

TEST(Network, GradientMatchesFiniteDifferencesRot) { expect_network_fd(gradcheck::rot_network(20)); }

TEST(Embed, GridShapeAndPooledMean) {
  std::mt19937_64 rng(3);
  SortNet net(5);
  const auto slices = random_slices(2, 64, rng);
  const auto grids = embed(net, slices);
  ASSERT_EQ(grids.size(), 2u);
  for (const auto& g : grids) {
    EXPECT_EQ(g.rows, 4u);
    EXPECT_EQ(g.cols, 4u);
    EXPECT_EQ(g.dim, 64u);
    for (std::size_t k = 0; k < 64; ++k) {
      double mean = 0;
      for (std::size_t c = 0; c < 16; ++c) mean += g.vectors[c * 64 + k];
      EXPECT_NEAR(mean / 16.0, g.pooled[k], 1e-6 * std::max(1.0, std::abs(mean / 16.0)));
    }
  }
}

TEST(Embed, ZeroInputGivesEqualEmbeddings) {
  SortNet net(6);
  const EmbeddingGrid g = embed(net, Slice2D(64, 64, 0.0f));
  for (std::size_t c = 1; c < g.rows * g.cols; ++c)
    for (std::size_t k = 0; k < g.dim; ++k) EXPECT_EQ(g.vectors[c * g.dim + k], g.vectors[k]);
}

TEST(Checkpoint, RoundTripGivesIdenticalOutputs) {
  std::mt19937_64 rng(4);
  RotNet net(7, 11);
  const fs::path p = fs::temp_directory_path() / "volssl_test_rot.vckp";
  net.save(p);
  const RotNet back = RotNet::load(p);
  RotBatch b;
  b.reference = random_slices(3, 32, rng);
  b.rotated = random_slices(3, 32, rng);
  b.labels = {0, 0, 0};
  Tape tape = Tape::inference();
  const Tensor a = net.forward_batch(tape, b), c = back.forward_batch(tape, b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], c.data()[i]);

  std::ifstream in(p, std::ios::binary);
  std::string magic, header;
  std::getline(in, magic);
  std::getline(in, header);
  EXPECT_EQ(magic, "VCKP1");
  EXPECT_EQ(fs::file_size(p), 6 + header.size() + 1 + 4 * net.parameter_count());
  fs::remove(p);
}

TEST(Checkpoint, SortIntoRotIsShapeMismatch) {
  const fs::path p = fs::temp_directory_path() / "volssl_test_sort.vckp";
  SortNet(1).save(p);
  EXPECT_THROW(RotNet::load(p), ShapeMismatchError);
  EXPECT_NO_THROW(SortNet::load(p));
  fs::remove(p);
}

TEST(Checkpoint, FormatErrors) {
  std::stringstream bad("VCKPX\n[]\n");
  EXPECT_THROW(read_checkpoint(bad), BadMagicError);

  std::stringstream good;
  write_checkpoint(good, {{"w", Tensor::from_data({2}, {1.0f, 2.0f})}});
  const std::string bytes = good.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_checkpoint(cut), TruncatedError);
  std::stringstream extra(bytes + "abcd");
  EXPECT_THROW(read_checkpoint(extra), ShapeMismatchError);
  std::stringstream ok(bytes);
  const auto back = read_checkpoint(ok);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].name, "w");
  EXPECT_EQ(back[0].tensor.data()[1], 2.0f);
}

TEST(Checkpoint, HeaderListsNamesAndShapes) {
  std::stringstream s;
  write_checkpoint(s, {{"a", Tensor::zeros({2, 3})}, {"b", Tensor::zeros({4})}});
  std::string magic, header;
  std::getline(s, magic);
  std::getline(s, header);
  EXPECT_EQ(header, R"([{"name":"a","shape":[2,3]},{"name":"b","shape":[4]}])");
}

TEST(Network, UntrainedRotationIsChance) {
  // A fresh network's predictions carry no information about the labels.
  std::mt19937_64 rng(7);
  RotNet net(7, 21);
  std::size_t hits = 0, n = 0;
  for (int r = 0; r < 40; ++r) {
    RotBatch b;
    b.reference = random_slices(25, 32, rng);
    b.rotated = random_slices(25, 32, rng);
    for (int i = 0; i < 25; ++i) b.labels.push_back(std::uniform_int_distribution<int>(0, 6)(rng));
    Tape tape = Tape::inference();
    const Tensor y = net.forward_batch(tape, b);
    hits += static_cast<std::size_t>(std::lround(accuracy(y, b.labels) * 25));
    n += 25;
  }
  const double p = 1.0 / 7.0, acc = static_cast<double>(hits) / n;
  EXPECT_LT(std::abs(acc - p), 4 * std::sqrt(p * (1 - p) / n));
}

TEST(Training, RepeatedRunsInOneProcessAreBitIdentical) {
  std::vector<Volume3D> vols;
  for (std::uint64_t s = 0; s < 2; ++s) {
    PhantomSpec p;
    p.seed = s;
    p.extents = {32, 32, 32};
    vols.push_back(generate_phantom(p).volume);
  }
  SamplerConfig cfg;
  cfg.batch_size = 4;
  TrainOptions o;
  o.steps = 8;
  std::vector<std::vector<float>> params[2];
  std::vector<StepRecord> logs[2];
  for (int run = 0; run < 2; ++run) {
    // Unrelated allocations shift where the next buffers land.
    std::vector<std::vector<float>> padding(run * 7 + 1, std::vector<float>(run * 13 + 3));
    SortNet net(4);
    logs[run] = train_sort(net, vols, cfg, o);
    for (const auto& t : net.parameters()) params[run].emplace_back(t.data().begin(), t.data().end());
  }
  for (std::size_t i = 0; i < logs[0].size(); ++i) EXPECT_EQ(logs[0][i].loss, logs[1][i].loss) << "step " << i;
  EXPECT_EQ(params[0], params[1]);
}
