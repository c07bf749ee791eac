#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tarmac {

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shapes are rank 1 or 2; rank-1 tensors behave as a single row where a
// matrix is expected.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw TensorError("non-positive dimension in shape");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized like value iff requires_grad
  bool requires_grad = false;

  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const {
    if (shape.empty()) return 1;
    return shape.size() == 2 ? shape[1] : shape[0];
  }
  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
};

template <typename T>
class Tape;

// Non-owning handle to a tensor living on a tape (or in a ParamStore).
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<T>* tape, TensorData<T>* d) : tape_(tape), d_(d) {}

  bool valid() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rows() const { return d_->rows(); }
  int cols() const { return d_->cols(); }
  std::int64_t size() const { return d_->size(); }
  bool requires_grad() const { return d_->requires_grad; }

  std::vector<T>& value() { return d_->value; }
  const std::vector<T>& value() const { return d_->value; }
  std::vector<T>& grad() { return d_->grad; }
  const std::vector<T>& grad() const { return d_->grad; }

  T at(int r, int c) const { return d_->value[static_cast<size_t>(r) * d_->cols() + c]; }
  T& at(int r, int c) { return d_->value[static_cast<size_t>(r) * d_->cols() + c]; }
  T item() const {
    if (d_->size() != 1) throw TensorError("item() on non-scalar tensor");
    return d_->value[0];
  }

  TensorData<T>* data() const { return d_; }
  Tape<T>* tape() const { return tape_; }

 private:
  Tape<T>* tape_ = nullptr;
  TensorData<T>* d_ = nullptr;
};

// Records the forward graph in execution order; backward replays it once in
// reverse, which is a reverse topological order by construction. Intermediate
// grads are zeroed at the start of each backward pass, so leaf grads
// accumulate across repeated calls until explicitly cleared.
template <typename T>
class Tape {
 public:
  Tensor<T> zeros(Shape shape, bool requires_grad = false) {
    return make(std::move(shape), requires_grad, /*is_output=*/false);
  }

  Tensor<T> leaf(Shape shape, std::vector<T> values, bool requires_grad = false) {
    Tensor<T> t = make(std::move(shape), requires_grad, false);
    if (static_cast<std::int64_t>(values.size()) != t.size())
      throw TensorError("leaf value count does not match shape " + shape_str(t.shape()));
    t.data()->value = std::move(values);
    return t;
  }

  // Wraps externally owned storage (parameters) without taking ownership.
  Tensor<T> adopt(TensorData<T>* external) { return Tensor<T>(this, external); }

  // Op outputs; grads of these are reset on every backward pass.
  Tensor<T> alloc(Shape shape, bool requires_grad) {
    Tensor<T> t = make(std::move(shape), requires_grad, true);
    return t;
  }

  void record(std::function<void()> back) {
    if (grad_enabled_) ops_.push_back(std::move(back));
  }

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw TensorError("backward() requires a scalar loss");
    if (!loss.requires_grad()) throw TensorError("backward() loss is not on the tape");
    for (TensorData<T>* d : outputs_) std::fill(d->grad.begin(), d->grad.end(), T(0));
    loss.data()->grad[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void reset() {
    ops_.clear();
    outputs_.clear();
    owned_.clear();
  }

  size_t op_count() const { return ops_.size(); }

 private:
  Tensor<T> make(Shape shape, bool requires_grad, bool is_output) {
    auto d = std::make_unique<TensorData<T>>();
    d->shape = std::move(shape);
    d->value.assign(static_cast<size_t>(numel(d->shape)), T(0));
    d->requires_grad = requires_grad;
    if (requires_grad) d->grad.assign(d->value.size(), T(0));
    TensorData<T>* raw = d.get();
    owned_.push_back(std::move(d));
    if (is_output && requires_grad) outputs_.push_back(raw);
    return Tensor<T>(this, raw);
  }

  std::vector<std::unique_ptr<TensorData<T>>> owned_;
  std::vector<TensorData<T>*> outputs_;
  std::vector<std::function<void()>> ops_;
  bool grad_enabled_ = true;
};

}  // namespace tarmac
