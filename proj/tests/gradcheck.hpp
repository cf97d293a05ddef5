#pragma once

// Finite-difference gradient checks of every differentiable op and of both
// model+loss compositions, shared by the unit tests and the acceptance run.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "reference.hpp"
#include "volssl/losses.hpp"
#include "volssl/models.hpp"
#include "volssl/tensor.hpp"

namespace gradcheck {

using namespace volssl;

inline constexpr double kStep = 1e-3;
inline constexpr double kTol = 1e-3;

struct Case {
  std::string name;
  ref::FdResult result;
};

inline bool passes(const ref::FdResult& r, std::size_t min_checked = 1) {
  return r.checked >= min_checked && r.max_rel < kTol && r.skipped * 10 <= r.checked + r.skipped;
}

inline void merge(ref::FdResult& into, const ref::FdResult& r) {
  into.max_rel = std::max(into.max_rel, r.max_rel);
  into.checked += r.checked;
  into.skipped += r.skipped;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true, float scale = 1.0f) {
  std::normal_distribution<float> d(0.0f, scale);
  std::vector<float> v(numel(shape));
  for (float& x : v) x = d(rng);
  return Tensor::from_data(std::move(shape), std::move(v), grad);
}

// Random projection weights so every output element contributes to the loss.
inline Tensor projection(const Tensor& out, std::mt19937_64& rng) {
  return random_tensor(out.shape(), rng, false);
}

inline Tensor project(Tape& tape, const Tensor& out, const Tensor& r) {
  return sum(tape, mul(tape, out, r));
}

struct ConvCase {
  std::size_t n, c, h, w, o, k;
  int stride, pad;
};

// One result per (geometry, argument): x, w, b.
inline std::vector<Case> conv2d(int seeds) {
  const ConvCase cases[] = {{2, 1, 5, 5, 1, 3, 1, 0}, {2, 1, 5, 5, 2, 3, 1, 1}, {2, 3, 6, 7, 4, 3, 2, 1},
                            {1, 2, 4, 4, 3, 1, 1, 0}};
  std::vector<Case> out;
  int idx = 0;
  for (const auto& cc : cases) {
    ref::FdResult rx, rw, rb;
    for (int seed = 0; seed < seeds; ++seed) {
      std::mt19937_64 rng(100 + seed);
      Tensor x = random_tensor({cc.n, cc.c, cc.h, cc.w}, rng);
      Tensor w = random_tensor({cc.o, cc.c, cc.k, cc.k}, rng);
      Tensor b = random_tensor({cc.o}, rng);
      Tape tape;
      const Tensor y = volssl::conv2d(tape, x, w, b, cc.stride, cc.pad);
      const Tensor r = projection(y, rng);
      tape.backward(project(tape, y, r));

      const ref::Dims d{cc.n, cc.c, cc.h, cc.w};
      const ref::Vec R = ref::widen(r.data());
      ref::Vec X = ref::widen(x.data()), W = ref::widen(w.data()), B = ref::widen(b.data());
      ref::Dims od;
      ref::fd_check(X, x.grad(), ref::all_coords(X.size()),
                    [&](const ref::Vec& v, ref::Branches*) {
                      return ref::dot(R, ref::conv2d(v, d, W, cc.o, cc.k, cc.k, B, cc.stride, cc.pad, &od));
                    },
                    kStep, rx);
      ref::fd_check(W, w.grad(), ref::all_coords(W.size()),
                    [&](const ref::Vec& v, ref::Branches*) {
                      return ref::dot(R, ref::conv2d(X, d, v, cc.o, cc.k, cc.k, B, cc.stride, cc.pad, &od));
                    },
                    kStep, rw);
      ref::fd_check(B, b.grad(), ref::all_coords(B.size()),
                    [&](const ref::Vec& v, ref::Branches*) {
                      return ref::dot(R, ref::conv2d(X, d, W, cc.o, cc.k, cc.k, v, cc.stride, cc.pad, &od));
                    },
                    kStep, rb);
    }
    const std::string tag = "conv2d#" + std::to_string(idx++);
    out.push_back({tag + " x", rx});
    out.push_back({tag + " w", rw});
    out.push_back({tag + " b", rb});
  }
  return out;
}

inline ref::FdResult relu(int seeds) {
  ref::FdResult res;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(200 + seed);
    Tensor x = random_tensor({3, 17}, rng);
    Tape tape;
    const Tensor y = volssl::relu(tape, x);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data());
    ref::fd_check(ref::widen(x.data()), x.grad(), ref::all_coords(x.size()),
                  [&](const ref::Vec& v, ref::Branches* br) { return ref::dot(R, ref::relu(v, br)); },
                  kStep, res);
  }
  return res;
}

inline ref::FdResult maxpool(int seeds) {
  ref::FdResult res;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(300 + seed);
    Tensor x = random_tensor({2, 3, 6, 5}, rng);
    Tape tape;
    const Tensor y = maxpool2d(tape, x, 2);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data());
    ref::Dims od;
    ref::fd_check(ref::widen(x.data()), x.grad(), ref::all_coords(x.size()),
                  [&](const ref::Vec& v, ref::Branches* br) {
                    return ref::dot(R, ref::maxpool(v, {2, 3, 6, 5}, 2, &od, br));
                  },
                  kStep, res);
  }
  return res;
}

inline ref::FdResult global_avg_pool(int seeds) {
  ref::FdResult res;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(400 + seed);
    Tensor x = random_tensor({2, 3, 4, 5}, rng);
    Tape tape;
    const Tensor y = volssl::global_avg_pool(tape, x);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data());
    ref::fd_check(ref::widen(x.data()), x.grad(), ref::all_coords(x.size()),
                  [&](const ref::Vec& v, ref::Branches*) {
                    return ref::dot(R, ref::global_avg_pool(v, {2, 3, 4, 5}));
                  },
                  kStep, res);
  }
  return res;
}

inline std::vector<Case> linear(int seeds) {
  ref::FdResult rx, rw, rb;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(500 + seed);
    Tensor x = random_tensor({4, 6}, rng), w = random_tensor({3, 6}, rng), b = random_tensor({3}, rng);
    Tape tape;
    const Tensor y = volssl::linear(tape, x, w, b);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data());
    const ref::Vec X = ref::widen(x.data()), W = ref::widen(w.data()), B = ref::widen(b.data());
    ref::fd_check(X, x.grad(), ref::all_coords(X.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return ref::dot(R, ref::linear(v, 4, 6, W, B, 3)); },
                  kStep, rx);
    ref::fd_check(W, w.grad(), ref::all_coords(W.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return ref::dot(R, ref::linear(X, 4, 6, v, B, 3)); },
                  kStep, rw);
    ref::fd_check(B, b.grad(), ref::all_coords(B.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return ref::dot(R, ref::linear(X, 4, 6, W, v, 3)); },
                  kStep, rb);
  }
  return {{"linear x", rx}, {"linear w", rw}, {"linear b", rb}};
}

inline std::vector<Case> concat_channels(int seeds) {
  ref::FdResult ra, rb;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(600 + seed);
    Tensor a = random_tensor({2, 1, 3, 4}, rng), b = random_tensor({2, 2, 3, 4}, rng);
    Tape tape;
    const Tensor y = volssl::concat_channels(tape, a, b);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data());
    const ref::Vec A = ref::widen(a.data()), B = ref::widen(b.data());
    ref::fd_check(A, a.grad(), ref::all_coords(A.size()),
                  [&](const ref::Vec& v, ref::Branches*) {
                    return ref::dot(R, ref::concat_channels(v, {2, 1, 3, 4}, B, {2, 2, 3, 4}));
                  },
                  kStep, ra);
    ref::fd_check(B, b.grad(), ref::all_coords(B.size()),
                  [&](const ref::Vec& v, ref::Branches*) {
                    return ref::dot(R, ref::concat_channels(A, {2, 1, 3, 4}, v, {2, 2, 3, 4}));
                  },
                  kStep, rb);
  }
  return {{"concat a", ra}, {"concat b", rb}};
}

inline ref::FdResult softmax_nll(int seeds) {
  ref::FdResult res;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(700 + seed);
    Tensor x = random_tensor({5, 7}, rng, true, 2.0f);
    std::vector<int> labels(5);
    for (int& l : labels) l = std::uniform_int_distribution<int>(0, 6)(rng);
    Tape tape;
    tape.backward(volssl::softmax_nll(tape, x, labels));
    ref::fd_check(ref::widen(x.data()), x.grad(), ref::all_coords(x.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return ref::softmax_nll(v, 5, 7, labels); },
                  kStep, res);
  }
  return res;
}

inline std::vector<Case> add_mul(int seeds) {
  ref::FdResult ra, rb;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(800 + seed);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    Tape tape;
    const Tensor y = mul(tape, add(tape, a, b), a);
    const Tensor r = projection(y, rng);
    tape.backward(project(tape, y, r));
    const ref::Vec R = ref::widen(r.data()), A = ref::widen(a.data()), B = ref::widen(b.data());
    auto f = [&](const ref::Vec& va, const ref::Vec& vb) {
      double s = 0.0;
      for (std::size_t i = 0; i < va.size(); ++i) s += R[i] * (va[i] + vb[i]) * va[i];
      return s;
    };
    ref::fd_check(A, a.grad(), ref::all_coords(A.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return f(v, B); }, kStep, ra);
    ref::fd_check(B, b.grad(), ref::all_coords(B.size()),
                  [&](const ref::Vec& v, ref::Branches*) { return f(A, v); }, kStep, rb);
  }
  return {{"add/mul a", ra}, {"add/mul b", rb}};
}

inline ref::FdResult margin_loss(int seeds) {
  ref::FdResult res;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(900 + seed);
    Tensor f = random_tensor({8, 1}, rng, true, 0.2f);
    std::vector<int> y{0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(y.begin(), y.end(), rng);
    Tape tape;
    tape.backward(margin_ranking_loss(tape, f, y, 0.1f));
    ref::fd_check(ref::widen(f.data()), f.grad(), ref::all_coords(f.size()),
                  [&](const ref::Vec& v, ref::Branches* br) { return ref::margin_loss(v, y, 0.1, br); },
                  kStep, res);
  }
  return res;
}

inline std::vector<Case> all_ops(int seeds) {
  std::vector<Case> out = conv2d(seeds);
  auto append = [&](std::vector<Case> more) { out.insert(out.end(), more.begin(), more.end()); };
  out.push_back({"relu", relu(seeds)});
  out.push_back({"maxpool", maxpool(seeds)});
  out.push_back({"global_avg_pool", global_avg_pool(seeds)});
  append(linear(seeds));
  append(concat_channels(seeds));
  out.push_back({"softmax_nll", softmax_nll(seeds)});
  append(add_mul(seeds));
  out.push_back({"margin_loss", margin_loss(seeds)});
  return out;
}

inline std::vector<Slice2D> random_slices(std::size_t n, std::size_t hw, std::mt19937_64& rng) {
  std::normal_distribution<float> d;
  std::vector<Slice2D> out;
  for (std::size_t i = 0; i < n; ++i) {
    Slice2D s(hw, hw);
    for (float& x : s.data()) x = d(rng);
    out.push_back(std::move(s));
  }
  return out;
}

// Gradient of a scalar network loss w.r.t. sampled parameter coordinates,
// checked against central differences of the double-precision reference.
template <typename Net, typename LossRef>
ref::FdResult check_network(Net& net, const Tensor& input, const Tensor& loss_tensor, Tape& tape,
                            const ref::NetShape& shape, const LossRef& ref_loss, std::mt19937_64& rng,
                            std::size_t per_tensor) {
  tape.backward(loss_tensor);
  std::vector<ref::Vec> p;
  for (const auto& t : net.parameters()) p.push_back(ref::widen(t.data()));
  const ref::Vec x = ref::widen(input.data());
  const ref::Dims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3)};
  ref::FdResult res;
  for (std::size_t t = 0; t < p.size(); ++t) {
    std::vector<std::size_t> coords;
    for (std::size_t k = 0; k < per_tensor; ++k)
      coords.push_back(std::uniform_int_distribution<std::size_t>(0, p[t].size() - 1)(rng));
    ref::fd_check(p[t], net.parameters()[t].grad(), coords,
                  [&](const ref::Vec& v, ref::Branches* br) {
                    std::vector<ref::Vec> q = p;
                    q[t] = v;
                    const ref::Vec out = ref::network(q, shape, x, d, br);
                    return ref_loss(out, br);
                  },
                  kStep, res);
  }
  return res;
}

// Smallest legal input (16x16) and batch (2): every extra activation is
// another kink a finite step can cross.
inline ref::FdResult sort_network(int seeds) {
  ref::FdResult total;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    SortNet net(seed);
    SortBatch b;
    b.slices = random_slices(2, 16, rng);
    b.ranks = {1, 0};
    Tape tape;
    const Tensor x = to_tensor(b);
    const Tensor f = net.forward(tape, x);
    const float m = 0.05f;
    const Tensor loss = margin_ranking_loss(tape, f, b.ranks, m);
    merge(total, check_network(net, x, loss, tape, {1, {16, 32, 64, 64}, 1},
                               [&](const ref::Vec& out, ref::Branches* br) {
                                 return ref::margin_loss(out, b.ranks, m, br);
                               },
                               rng, 2));
  }
  return total;
}

inline ref::FdResult rot_network(int seeds) {
  ref::FdResult total;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(200 + seed);
    RotNet net(7, seed);
    RotBatch b;
    b.reference = random_slices(2, 16, rng);
    b.rotated = random_slices(2, 16, rng);
    b.labels = {1, 4};
    Tape tape;
    const Tensor x = to_tensor(b);
    const Tensor logits = net.forward(tape, x);
    const Tensor loss = rotation_nll(tape, logits, b.labels);
    merge(total, check_network(net, x, loss, tape, {2, {16, 32, 64, 64}, 7},
                               [&](const ref::Vec& out, ref::Branches*) {
                                 return ref::softmax_nll(out, 2, 7, b.labels);
                               },
                               rng, 2));
  }
  return total;
}

}  // namespace gradcheck
