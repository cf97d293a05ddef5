#pragma once

// Minimal reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a float buffer plus an optional gradient.
// Operations take a Tape; when the tape is recording and an input needs a
// gradient, the operation appends a backward closure. Tape::backward replays
// those closures in reverse order.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace volssl {

using Shape = std::vector<std::size_t>;

// Vectorized kernels choose their loop peeling from buffer alignment, so a
// fixed alignment keeps results bit-identical across allocations.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const float> data() const { return impl_->data; }
  // Writable view for initialization and optimizer updates.
  std::span<float> mutable_data() { return impl_->data; }
  float item() const;

  // Leaf flag set by the user.
  bool requires_grad() const { return impl_->requires_grad; }
  // True when gradients flow through this tensor (leaf or derived).
  bool needs_grad() const { return impl_->needs_grad; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  // Allocates a zero gradient on first use.
  std::span<float> mutable_grad();
  void zero_grad();

  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    FloatBuffer data;
    FloatBuffer grad;
    bool requires_grad = false;
    bool needs_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  static Tensor make(Shape shape, FloatBuffer data, bool requires_grad);

  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

class Tape {
 public:
  Tape() = default;

  // A tape that never records; use for inference.
  static Tape inference();

  bool recording() const { return recording_; }

  // Creates an op output. needs_grad is set when the tape records and any
  // input needs a gradient.
  Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs) const;
  Tensor make_output(Shape shape, std::vector<float> data,
                     std::initializer_list<const Tensor*> inputs) const;

  // Appends a backward closure producing gradients for the inputs of
  // `output`. Ignored unless output.needs_grad().
  void record(const Tensor& output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Gradients of leaves accumulate
  // across calls; gradients of intermediates are reset first.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
};

// ---- operations -----------------------------------------------------------

// input [N,C,H,W], weight [O,C,kH,kW], bias [O]; zero padding.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
Tensor relu(Tape& tape, const Tensor& x);
// Non-overlapping k×k max pooling; trailing rows/cols that do not fill a window are dropped.
Tensor maxpool2d(Tape& tape, const Tensor& x, int k = 2);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(Tape& tape, const Tensor& x);
// x [N,In], weight [Out,In], bias [Out] -> [N,Out]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);
// [N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);
// Mean over the batch of -log softmax(logits)[label]; logits [N,K].
Tensor softmax_nll(Tape& tape, const Tensor& logits, std::span<const int> labels);

Tensor sum(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

// Row-wise softmax of a [N,K] tensor, not differentiable.
std::vector<float> softmax_rows(const Tensor& logits);

}  // namespace volssl
