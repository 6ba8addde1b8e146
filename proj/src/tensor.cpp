#include "gdvm/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace gdvm {

std::size_t numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data.assign(numel(impl_->shape), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("ragged rows in Tensor::matrix");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() requires a one-element tensor, got " +
                        (impl_ ? shape_str(impl_->shape) : std::string("<empty>")));
  }
  return impl_->data[0];
}

namespace {

std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> idx) {
  if (idx.size() != shape.size()) {
    throw DimensionError("index rank does not match tensor rank in Tensor::at");
  }
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t v : idx) {
    if (v >= shape[i]) throw DimensionError("index out of range in Tensor::at");
    flat = flat * shape[i] + v;
    ++i;
  }
  return flat;
}

}  // namespace

double& Tensor::at(std::initializer_list<std::size_t> idx) {
  return impl_->data[flat_index(impl_->shape, idx)];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  return impl_->data[flat_index(impl_->shape, idx)];
}

Tensor Tensor::clone() const {
  if (!impl_) return Tensor();
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  return t;
}

void Tensor::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tape::~Tape() {
  for (auto& impl : attached_) {
    if (impl->tape == this) {
      impl->tape = nullptr;
      impl->node = -1;
    }
  }
}

void Tape::watch(Tensor& t) {
  if (t.empty()) throw ContractError("cannot watch an empty tensor");
  if (t.impl_->tape == this && t.impl_->node >= 0) return;
  if (t.impl_->grad.empty()) t.impl_->grad.assign(t.size(), 0.0);
  t.impl_->tape = this;
  t.impl_->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, nullptr});
  attached_.push_back(t.impl_);
}

int Tape::record(Tensor& out, std::vector<int> parents, std::function<void()> pull) {
  out.impl_->grad.assign(out.size(), 0.0);
  out.impl_->tape = this;
  out.impl_->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(parents), std::move(pull)});
  attached_.push_back(out.impl_);
  return out.impl_->node;
}

void Tape::set_pull(int node, std::function<void()> pull) {
  nodes_.at(static_cast<std::size_t>(node)).pull = std::move(pull);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  // Mark ancestors of the loss.
  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<int> stack{loss.node()};
  reachable[static_cast<std::size_t>(loss.node())] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int p : nodes_[static_cast<std::size_t>(id)].parents) {
      if (!reachable[static_cast<std::size_t>(p)]) {
        reachable[static_cast<std::size_t>(p)] = 1;
        stack.push_back(p);
      }
    }
  }
  loss.impl_->grad[0] += 1.0;
  for (int id = loss.node(); id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (reachable[static_cast<std::size_t>(id)] && node.pull) node.pull();
  }
}

}  // namespace gdvm
