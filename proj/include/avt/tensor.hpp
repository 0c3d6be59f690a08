#pragma once
// Dense float64 tensors on a reverse-mode tape.
//
// A Tensor is a cheap value type over shared storage. Recording is implicit:
// while a TapeScope is active, any op whose input requires grad appends a
// node (parents + backward closure) to the active tape. backward(root) seeds
// d(root)/d(root) = 1 and walks the tape once in reverse; leaf gradients
// accumulate across calls until zero_grad(), intermediate gradients are
// tape-transient.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "avt/common.hpp"
#include "avt/random.hpp"

namespace avt {

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty = not allocated; same length as value otherwise
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // tape that produced this tensor (0 = leaf/none)
  std::int64_t node = -1;     // producing node index on that tape
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> value);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);
  static Tensor from_vector(std::vector<double> v);  // 1-D
  static Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
  static Tensor rand_uniform(const Shape& shape, Rng& rng, double lo, double hi);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->value.size(); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

  const double* data() const { return impl_->value.data(); }
  double* data() { return impl_->value.data(); }
  const std::vector<double>& values() const { return impl_->value; }
  double operator[](std::size_t i) const { return impl_->value[i]; }
  double item() const;  // scalar tensors only

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool b);

  // Gradient buffer; allocates zeros on first access for grad-enabled tensors.
  std::vector<double>& grad();
  const std::vector<double>& grad_ref() const { return impl_->grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  // Value copy detached from any tape (requires_grad = false).
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward;
    const char* op = "";
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  std::int64_t record(const char* op,
                      std::vector<std::shared_ptr<TensorImpl>> inputs,
                      std::shared_ptr<TensorImpl> output,
                      std::function<void()> backward);

  // Seeds root with gradient 1 and propagates through the recorded graph.
  // root must be scalar; a constant root (not on this tape) is a no-op.
  void backward(const Tensor& root);

  void clear();

  static Tape* active();

 private:
  friend struct TapeScope;
  std::vector<Node> nodes_;
  std::uint64_t id_;
};

// Activates a tape for the current scope (single active tape at a time;
// the artifact is single-threaded, nesting restores the previous one).
struct TapeScope {
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Zero-fills (allocating if needed) the gradient buffer of an impl.
void ensure_grad(const std::shared_ptr<TensorImpl>& impl);

}  // namespace avt
