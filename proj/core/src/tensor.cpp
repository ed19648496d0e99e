#include "patchdrop/tensor.hpp"

#include <numeric>
#include <sstream>
#include <utility>

#include "patchdrop/flops.hpp"

namespace patchdrop {

namespace {
thread_local Tape* t_active_tape = nullptr;
thread_local bool t_count_only = false;
std::uint64_t g_flops = 0;
}  // namespace

namespace flops {

std::uint64_t count() { return g_flops; }
void reset() { g_flops = 0; }
void add(std::uint64_t macs) { g_flops += macs; }
bool count_only() { return t_count_only; }

CountOnlyScope::CountOnlyScope() : previous_(t_count_only) {
  t_count_only = true;
}
CountOnlyScope::~CountOnlyScope() { t_count_only = previous_; }

}  // namespace flops

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool hollow = false;
};

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_numel(shape), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.impl_->data) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeMismatch("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::hollow(Shape shape) {
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->hollow = true;
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::numel() const { return shape_numel(impl_->shape); }

bool Tensor::has_storage() const { return impl_ && !impl_->hollow; }

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

std::span<const double> Tensor::values() const {
  if (!has_storage()) throw Error("reading elements of a hollow tensor");
  return impl_->data;
}

std::span<double> Tensor::values_mut() {
  if (!has_storage()) throw Error("writing elements of a hollow tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
  }
  return values()[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw ShapeMismatch("index rank mismatch in at()");
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= impl_->shape[axis]) throw IndexOutOfRange("at() out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return values()[flat];
}

std::span<double> Tensor::grad_mut() {
  if (!has_storage()) throw Error("gradient of a hollow tensor");
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const {
  return const_cast<Tensor*>(this)->grad_mut();
}

bool Tensor::grad_allocated() const { return !impl_->grad.empty(); }

void Tensor::zero_grad() {
  impl_->grad.assign(impl_->grad.size(), 0.0);
}

void Tape::record(const char* name, std::function<void()> backward) {
  ops_.push_back(Op{name, std::move(backward)});
}

std::size_t Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeMismatch("backward() root must be a scalar, got " +
                        shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw Error("backward() root does not require gradients");
  }
  Tensor r = root;
  r.grad_mut()[0] = 1.0;
  std::size_t visited = 0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    it->backward();
    ++visited;
  }
  return visited;
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) {
  t_active_tape = &tape;
}

TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

}  // namespace patchdrop
