#include "avt/tensor.hpp"

#include <atomic>

namespace avt {

Tensor::Tensor(Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size())
    throw ShapeError(strcat_msg("Tensor: shape ", shape_str(shape),
                                " does not match ", value.size(), " values"));
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->value = std::move(value);
}

Tensor Tensor::zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(numel(shape), 0.0));
}

Tensor Tensor::full(const Shape& shape, double v) {
  return Tensor(shape, std::vector<double>(numel(shape), v));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, {v}); }

Tensor Tensor::from_vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, double stddev) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal() * stddev;
  return Tensor(shape, std::move(v));
}

Tensor Tensor::rand_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError(strcat_msg("item: tensor ", shape_str(shape()),
                                " is not a scalar"));
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  impl_->requires_grad = b;
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t(impl_->shape, impl_->value);
  return t;
}

void ensure_grad(const std::shared_ptr<TensorImpl>& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->value.size(), 0.0);
}

namespace {
std::atomic<std::uint64_t> g_tape_counter{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

std::int64_t Tape::record(const char* op,
                          std::vector<std::shared_ptr<TensorImpl>> inputs,
                          std::shared_ptr<TensorImpl> output,
                          std::function<void()> backward) {
  output->tape_id = id_;
  output->node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward), op});
  return nodes_.back().output->node;
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw ShapeError(strcat_msg("backward: root must be scalar, got ",
                                root.defined() ? shape_str(root.shape()) : "<null>"));
  const auto& impl = root.impl();
  if (impl->tape_id != id_ || impl->node < 0) return;  // constant root: nothing to do

  // Intermediate grads are transient per backward pass; leaves accumulate.
  for (auto& n : nodes_)
    if (!n.output->grad.empty()) n.output->grad.assign(n.output->value.size(), 0.0);

  ensure_grad(impl);
  impl->grad[0] = 1.0;

  for (std::int64_t i = impl->node; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.output->grad.empty()) continue;  // not reachable from root
    n.backward();
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace avt
