#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "patchdrop/error.hpp"

namespace patchdrop {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
///
/// Copies are shallow handles to the same storage. Op results are never
/// mutated after creation; only gradient buffers and optimizer updates write
/// into existing storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  /// Shape-only tensor used under flops::CountOnlyScope; holds no elements.
  static Tensor hollow(Shape shape);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;
  bool has_storage() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  std::span<const double> values() const;
  std::span<double> values_mut();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Gradient buffer, allocated to zeros on first use.
  std::span<double> grad_mut();
  std::span<const double> grad() const;
  bool grad_allocated() const;
  void zero_grad();

  /// Stable identity of the underlying storage (tape node id).
  const void* node_id() const { return impl_.get(); }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
};

/// Record of one reverse pass. Ops append themselves in execution order,
/// which is automatically a topological order of the data flow; backward()
/// replays the list exactly once in reverse.
class Tape {
 public:
  struct Op {
    const char* name;
    std::function<void()> backward;
  };

  void record(const char* name, std::function<void()> backward);
  std::size_t size() const { return ops_.size(); }
  const char* op_name(std::size_t i) const { return ops_[i].name; }

  /// Seeds d(root)/d(root) = 1 and propagates to every recorded input.
  /// Returns the number of ops visited (always size()).
  std::size_t backward(const Tensor& root);

  void clear() { ops_.clear(); }

 private:
  std::vector<Op> ops_;
};

/// Activates a tape for the current thread; ops record while one is active.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

}  // namespace patchdrop
