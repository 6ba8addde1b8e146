#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gdvm/errors.hpp"

namespace gdvm {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense row-major tensor of doubles with handle semantics: copies refer to the
// same storage, gradient and tape linkage; clone() deep-copies. A tensor
// participates in reverse-mode differentiation only once a Tape has attached a
// node to it, either through Tape::watch or by being produced by a recorded
// operation. Tensors created outside a tape never accumulate gradient.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  // 2-D convenience constructor for tests and small fixtures.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_ ? impl_->shape.size() : 0; }
  std::size_t size() const { return impl_ ? impl_->data.size() : 0; }
  bool empty() const { return size() == 0; }

  std::span<double> values() { return impl_ ? std::span<double>(impl_->data) : std::span<double>(); }
  std::span<const double> values() const {
    return impl_ ? std::span<const double>(impl_->data) : std::span<const double>();
  }
  double* data() { return impl_ ? impl_->data.data() : nullptr; }
  const double* data() const { return impl_ ? impl_->data.data() : nullptr; }

  // Value of a one-element tensor.
  double item() const;

  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  // Multi-index accessor (slow; intended for tests and small tensors).
  double& at(std::initializer_list<std::size_t> idx);
  double at(std::initializer_list<std::size_t> idx) const;

  Tensor clone() const;

  bool on_tape() const { return impl_ && impl_->tape != nullptr; }
  Tape* tape() const { return impl_ ? impl_->tape : nullptr; }
  int node() const { return impl_ ? impl_->node : -1; }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<double> grad() {
    return has_grad() ? std::span<double>(impl_->grad) : std::span<double>();
  }
  std::span<const double> grad() const {
    return has_grad() ? std::span<const double>(impl_->grad) : std::span<const double>();
  }
  void zero_grad();

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until attached to a tape
    Tape* tape = nullptr;
    int node = -1;
  };
  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

// Dynamic tape of recorded operations, rebuilt per batch. Topological order is
// recording order; the backward sweep walks ancestors of the loss in reverse
// order, accumulating gradients additively at fan-out points. On destruction
// the tape clears the linkage of every tensor it attached (gradient buffers
// are kept so optimizer steps may run after the tape is gone).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Attaches t as a leaf. Allocates the gradient buffer if absent; existing
  // gradient contents are kept (accumulation across calls is the documented
  // behaviour; the training loop resets parameter gradients per batch).
  void watch(Tensor& t);

  // Records an operation node producing `out` and allocates its gradient
  // buffer. `parents` are the node ids of the attached inputs.
  int record(Tensor& out, std::vector<int> parents, std::function<void()> pull = nullptr);
  void set_pull(int node, std::function<void()> pull);

  // Reverse sweep from a scalar loss recorded on this tape. Only ancestors of
  // the loss node are visited, so unrelated recorded values (e.g. diagnostics)
  // contribute nothing.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    std::function<void()> pull;
  };
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<Tensor::Impl>> attached_;
};

}  // namespace gdvm
