#pragma once

#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gdvm/ops.hpp"
#include "gdvm/tensor.hpp"

namespace gdvm {

enum class LayerKind {
  kDense,
  kConv,
  kMaxPool,
  kRelu,
  kDropout,
  kFlatten,
  kSoftmax,
  kL2Normalize,
};

std::string layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(std::string_view name);

// One architecture-table row. Shapes are per sample (no batch dimension).
// size_in/size_out may be left empty and are then inferred along the chain;
// when both sizes are given for a conv/pool row, stride and padding are
// derived from them the way the table format implies (asymmetric "same"
// padding when the total is odd).
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  Shape size_in;
  Shape size_out;
  int kernel = 0;    // conv / maxpool extent (square)
  int stride = 0;    // 0 = infer
  int padding = -1;  // -1 = infer; symmetric when explicit
  double rate = 0.0; // dropout rate
};

// LayerSpec with all shapes/geometry resolved against the incoming shape.
struct ResolvedLayer {
  LayerSpec spec;
  Shape in;
  Shape out;
  int stride = 1;
  Padding2d pad;
};

// Walks the chain from `input_shape`, inferring unspecified geometry and
// rejecting any row whose declared sizes disagree with its neighbours.
std::vector<ResolvedLayer> validate_chain(const Shape& input_shape,
                                          const std::vector<LayerSpec>& specs);

// Named parameter tensors in stable insertion order.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor* find(std::string_view name);
  const Tensor* find(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  void zero_grads();
  void attach_all(Tape& tape);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Glorot-uniform initialization; biases are zeroed separately by the layers.
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

struct ForwardCtx {
  bool training = false;
  bool dropout_enabled = true;       // run-config switch ("w/ dropout" rows)
  bool apply_softmax = false;        // terminal softmax only at probability output
  std::mt19937_64* dropout_rng = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, ForwardCtx& ctx) const = 0;
  virtual LayerKind kind() const = 0;
};

// A validated sequence of layers operating on batched tensors (leading batch
// dimension added to the per-sample shapes of the specs).
class LayerStack {
 public:
  LayerStack() = default;

  // Builds layers and registers parameters as "<prefix>.<idx>.<w|b>".
  static LayerStack build(const std::vector<ResolvedLayer>& layers, const std::string& prefix,
                          std::mt19937_64& init_rng, ParameterSet& params);

  Tensor forward(const Tensor& x, ForwardCtx& ctx) const;

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::shared_ptr<const Layer>> layers_;
  Shape input_shape_;
  Shape output_shape_;
};

}  // namespace gdvm
