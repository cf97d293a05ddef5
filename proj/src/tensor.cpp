#include "volssl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Core>

#include "volssl/error.hpp"

namespace volssl {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_rank(const Tensor& t, std::size_t r, const char* op, const char* arg) {
  require(t.defined(), std::string(op) + ": " + arg + " is undefined");
  if (t.rank() != r) {
    std::ostringstream os;
    os << op << ": " << arg << " must have rank " << r << ", got " << to_string(t.shape());
    throw ShapeError(os.str());
  }
}

void require_dim(std::size_t got, std::size_t want, const char* op, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << op << ": " << what << " mismatch (" << got << " vs " << want << ")";
    throw ShapeError(os.str());
  }
}

// Unfolds one image [C,H,W] into columns [C*kh*kw, Ho*Wo].
void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, float* cols) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        float* row = cols + ((ci * kh + ky) * kw + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          float* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = img + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back into an image gradient.
void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, float* img) {
  const std::size_t p = ho * wo;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const float* row = cols + ((ci * kh + ky) * kw + kx) * p;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          float* dst = img + (ci * h + static_cast<std::size_t>(iy)) * w;
          const float* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = numel(shape);
  return make(std::move(shape), FloatBuffer(n, 0.0f), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  return make(std::move(shape), FloatBuffer(data.begin(), data.end()), requires_grad);
}

Tensor Tensor::make(Shape shape, FloatBuffer data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->needs_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor " + to_string(shape()) + " is not a scalar");
  return impl_->data[0];
}

std::span<float> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

// ---- Tape -----------------------------------------------------------------

Tape Tape::inference() {
  Tape t;
  t.recording_ = false;
  return t;
}

Tensor Tape::make_output(Shape shape, std::initializer_list<const Tensor*> inputs) const {
  Tensor out = Tensor::zeros(std::move(shape), false);
  bool needs = false;
  if (recording_) {
    for (const Tensor* in : inputs) needs = needs || in->needs_grad();
  }
  out.impl_->needs_grad = needs;
  return out;
}

Tensor Tape::make_output(Shape shape, std::vector<float> data,
                         std::initializer_list<const Tensor*> inputs) const {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
  bool needs = false;
  if (recording_) {
    for (const Tensor* in : inputs) needs = needs || in->needs_grad();
  }
  out.impl_->needs_grad = needs;
  return out;
}

void Tape::record(const Tensor& output, std::function<void()> backward) {
  if (!recording_ || !output.needs_grad()) return;
  entries_.push_back({output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  for (auto& e : entries_) e.output.zero_grad();
  Tensor seed = loss;
  bool is_intermediate = false;
  for (const auto& e : entries_) is_intermediate = is_intermediate || e.output.same(loss);
  if (is_intermediate) {
    seed.mutable_grad()[0] = 1.0f;
  } else if (loss.needs_grad()) {
    seed.mutable_grad()[0] += 1.0f;
  }
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

// ---- operations -----------------------------------------------------------

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_rank(bias, 1, "conv2d", "bias");
  if (stride < 1 || pad < 0) throw ValueError("conv2d: stride must be >= 1 and pad >= 0");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t o = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  require_dim(weight.dim(1), c, "conv2d", "input channels (weight dim 1)");
  require_dim(bias.dim(0), o, "conv2d", "output channels (bias dim 0)");
  if (kh > h + 2 * static_cast<std::size_t>(pad)) {
    throw ShapeError("conv2d: kernel height " + std::to_string(kh) + " exceeds padded height");
  }
  if (kw > w + 2 * static_cast<std::size_t>(pad)) {
    throw ShapeError("conv2d: kernel width " + std::to_string(kw) + " exceeds padded width");
  }
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  const std::size_t k = c * kh * kw, p = ho * wo;

  Tensor out = tape.make_output({n, o, ho, wo}, {&input, &weight, &bias});
  auto cols = std::make_shared<FloatBuffer>(n * k * p);
  ConstMapMat wmat(weight.data().data(), o, k);
  float* out_data = out.mutable_data().data();
  const float* b = bias.data().data();
  for (std::size_t ni = 0; ni < n; ++ni) {
    float* col = cols->data() + ni * k * p;
    im2col(input.data().data() + ni * c * h * w, c, h, w, kh, kw, stride, pad, ho, wo, col);
    MapMat y(out_data + ni * o * p, o, p);
    y.noalias() = wmat * ConstMapMat(col, k, p);
    for (std::size_t oi = 0; oi < o; ++oi) y.row(oi).array() += b[oi];
  }

  tape.record(out, [=]() mutable {
    Tensor x = input, wt = weight, bs = bias;
    ConstMapMat wm(wt.data().data(), o, k);
    FloatBuffer dcol(k * p);
    for (std::size_t ni = 0; ni < n; ++ni) {
      ConstMapMat dy(out.grad().data() + ni * o * p, o, p);
      const float* col = cols->data() + ni * k * p;
      if (wt.needs_grad()) {
        MapMat dw(wt.mutable_grad().data(), o, k);
        dw.noalias() += dy * ConstMapMat(col, k, p).transpose();
      }
      if (bs.needs_grad()) {
        auto db = bs.mutable_grad();
        for (std::size_t oi = 0; oi < o; ++oi) db[oi] += dy.row(oi).sum();
      }
      if (x.needs_grad()) {
        MapMat dc(dcol.data(), k, p);
        dc.noalias() = wm.transpose() * dy;
        col2im(dcol.data(), c, h, w, kh, kw, stride, pad, ho, wo,
               x.mutable_grad().data() + ni * c * h * w);
      }
    }
  });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  require(x.defined(), "relu: input is undefined");
  std::vector<float> y(x.size());
  const auto xs = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xs[i] > 0.0f ? xs[i] : 0.0f;
  Tensor out = tape.make_output(x.shape(), std::move(y), {&x});
  tape.record(out, [x = Tensor(x), out]() mutable {
    auto gx = x.mutable_grad();
    const auto gy = out.grad();
    const auto xs = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xs[i] > 0.0f) gx[i] += gy[i];
    }
  });
  return out;
}

Tensor maxpool2d(Tape& tape, const Tensor& x, int k) {
  require_rank(x, 4, "maxpool2d", "input");
  if (k < 1) throw ValueError("maxpool2d: window must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ku = static_cast<std::size_t>(k);
  if (h < ku || w < ku) throw ShapeError("maxpool2d: input smaller than window");
  const std::size_t ho = h / ku, wo = w / ku;
  std::vector<float> y(n * c * ho * wo);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  const auto xs = x.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = base + oy * ku * w + ox * ku;
        for (std::size_t dy = 0; dy < ku; ++dy) {
          for (std::size_t dx = 0; dx < ku; ++dx) {
            const std::size_t idx = base + (oy * ku + dy) * w + ox * ku + dx;
            if (xs[idx] > xs[best]) best = idx;
          }
        }
        const std::size_t oi = (plane * ho + oy) * wo + ox;
        y[oi] = xs[best];
        (*argmax)[oi] = best;
      }
    }
  }
  Tensor out = tape.make_output({n, c, ho, wo}, std::move(y), {&x});
  tape.record(out, [x = Tensor(x), out, argmax]() mutable {
    auto gx = x.mutable_grad();
    const auto gy = out.grad();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
  });
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank(x, 4, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<float> y(n * c);
  const auto xs = x.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < hw; ++i) acc += xs[plane * hw + i];
    y[plane] = acc / static_cast<float>(hw);
  }
  Tensor out = tape.make_output({n, c}, std::move(y), {&x});
  tape.record(out, [x = Tensor(x), out, hw]() mutable {
    auto gx = x.mutable_grad();
    const auto gy = out.grad();
    const float inv = 1.0f / static_cast<float>(hw);
    for (std::size_t plane = 0; plane < gy.size(); ++plane) {
      const float g = gy[plane] * inv;
      for (std::size_t i = 0; i < hw; ++i) gx[plane * hw + i] += g;
    }
  });
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t n = x.dim(0), in = x.dim(1), o = weight.dim(0);
  require_dim(weight.dim(1), in, "linear", "input features (weight dim 1)");
  require_dim(bias.dim(0), o, "linear", "output features (bias dim 0)");
  Tensor out = tape.make_output({n, o}, {&x, &weight, &bias});
  MapMat y(out.mutable_data().data(), n, o);
  y.noalias() = ConstMapMat(x.data().data(), n, in) *
                ConstMapMat(weight.data().data(), o, in).transpose();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < o; ++j) y(r, j) += bias.data()[j];
  }
  tape.record(out, [=]() mutable {
    Tensor xi = x, wt = weight, bs = bias;
    ConstMapMat dy(out.grad().data(), n, o);
    if (wt.needs_grad()) {
      MapMat(wt.mutable_grad().data(), o, in).noalias() +=
          dy.transpose() * ConstMapMat(xi.data().data(), n, in);
    }
    if (bs.needs_grad()) {
      auto db = bs.mutable_grad();
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < o; ++j) db[j] += dy(r, j);
      }
    }
    if (xi.needs_grad()) {
      MapMat(xi.mutable_grad().data(), n, in).noalias() +=
          dy * ConstMapMat(wt.data().data(), o, in);
    }
  });
  return out;
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels", "a");
  require_rank(b, 4, "concat_channels", "b");
  require_dim(b.dim(0), a.dim(0), "concat_channels", "batch size");
  require_dim(b.dim(2), a.dim(2), "concat_channels", "height");
  require_dim(b.dim(3), a.dim(3), "concat_channels", "width");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<float> y(n * (ca + cb) * hw);
  for (std::size_t ni = 0; ni < n; ++ni) {
    std::copy_n(a.data().data() + ni * ca * hw, ca * hw, y.data() + ni * (ca + cb) * hw);
    std::copy_n(b.data().data() + ni * cb * hw, cb * hw, y.data() + (ni * (ca + cb) + ca) * hw);
  }
  Tensor out = tape.make_output({n, ca + cb, a.dim(2), a.dim(3)}, std::move(y), {&a, &b});
  tape.record(out, [=]() mutable {
    Tensor ta = a, tb = b;
    const auto gy = out.grad();
    for (std::size_t ni = 0; ni < n; ++ni) {
      const float* src = gy.data() + ni * (ca + cb) * hw;
      if (ta.needs_grad()) {
        float* dst = ta.mutable_grad().data() + ni * ca * hw;
        for (std::size_t i = 0; i < ca * hw; ++i) dst[i] += src[i];
      }
      if (tb.needs_grad()) {
        float* dst = tb.mutable_grad().data() + ni * cb * hw;
        for (std::size_t i = 0; i < cb * hw; ++i) dst[i] += src[ca * hw + i];
      }
    }
  });
  return out;
}

Tensor softmax_nll(Tape& tape, const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_nll", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  require_dim(labels.size(), n, "softmax_nll", "label count");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw ValueError("softmax_nll: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<float>>(softmax_rows(logits));
  const auto z = logits.data();
  float total = 0.0f;
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = z.data() + r * k;
    const float mx = *std::max_element(row, row + k);
    float s = 0.0f;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    total += std::log(s) + mx - row[labels[r]];
  }
  Tensor out = tape.make_output({1}, {total / static_cast<float>(n)}, {&logits});
  std::vector<int> lab(labels.begin(), labels.end());
  tape.record(out, [logits = Tensor(logits), out, probs, lab = std::move(lab), n, k]() mutable {
    auto gz = logits.mutable_grad();
    const float g = out.grad()[0] / static_cast<float>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const float onehot = static_cast<std::size_t>(lab[r]) == j ? 1.0f : 0.0f;
        gz[r * k + j] += g * ((*probs)[r * k + j] - onehot);
      }
    }
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  require(x.defined(), "sum: input is undefined");
  float acc = 0.0f;
  for (float v : x.data()) acc += v;
  Tensor out = tape.make_output({1}, {acc}, {&x});
  tape.record(out, [x = Tensor(x), out]() mutable {
    const float g = out.grad()[0];
    for (float& v : x.mutable_grad()) v += g;
  });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  std::vector<float> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  Tensor out = tape.make_output(a.shape(), std::move(y), {&a, &b});
  tape.record(out, [a = Tensor(a), b = Tensor(b), out]() mutable {
    const auto gy = out.grad();
    if (a.needs_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (b.needs_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  std::vector<float> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  Tensor out = tape.make_output(a.shape(), std::move(y), {&a, &b});
  tape.record(out, [a = Tensor(a), b = Tensor(b), out]() mutable {
    const auto gy = out.grad();
    if (a.needs_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b.data()[i];
    }
    if (b.needs_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a.data()[i];
    }
  });
  return out;
}

std::vector<float> softmax_rows(const Tensor& logits) {
  require_rank(logits, 2, "softmax_rows", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<float> p(n * k);
  const auto z = logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    const float* row = z.data() + r * k;
    const float mx = *std::max_element(row, row + k);
    float s = 0.0f;
    for (std::size_t j = 0; j < k; ++j) {
      p[r * k + j] = std::exp(row[j] - mx);
      s += p[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) p[r * k + j] /= s;
  }
  return p;
}

}  // namespace volssl
