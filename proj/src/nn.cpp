#include "gdvm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdvm/rng.hpp"

namespace gdvm {

std::string layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv: return "conv";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kL2Normalize: return "l2normalize";
  }
  return "?";
}

LayerKind layer_kind_from_name(std::string_view name) {
  if (name == "dense") return LayerKind::kDense;
  if (name == "conv") return LayerKind::kConv;
  if (name == "maxpool" || name == "pool") return LayerKind::kMaxPool;
  if (name == "relu") return LayerKind::kRelu;
  if (name == "dropout") return LayerKind::kDropout;
  if (name == "flatten") return LayerKind::kFlatten;
  if (name == "softmax") return LayerKind::kSoftmax;
  if (name == "l2normalize" || name == "normalize") return LayerKind::kL2Normalize;
  throw ConfigError("unknown layer op '" + std::string(name) + "'");
}

namespace {

std::string chain_err(std::size_t idx, const LayerSpec& spec, const std::string& msg) {
  return "layer " + std::to_string(idx) + " (" + layer_kind_name(spec.kind) + "): " + msg;
}

void check_declared_in(std::size_t idx, const LayerSpec& spec, const Shape& incoming) {
  if (!spec.size_in.empty() && spec.size_in != incoming) {
    throw DimensionError(chain_err(idx, spec,
                                   "declared size-in " + shape_str(spec.size_in) +
                                       " does not match incoming " + shape_str(incoming)));
  }
}

// Solves stride and (possibly asymmetric) padding from declared in/out spatial
// extents: total padding t = (out-1)*stride + kernel - in, split low/high.
struct SpatialFit {
  int stride;
  int beg_h, end_h, beg_w, end_w;
};

SpatialFit fit_conv_spatial(std::size_t idx, const LayerSpec& spec, std::size_t h,
                            std::size_t w, std::size_t oh, std::size_t ow,
                            std::size_t k) {
  for (int s = 1; s <= 8; ++s) {
    const long th = static_cast<long>((oh - 1) * s + k) - static_cast<long>(h);
    const long tw = static_cast<long>((ow - 1) * s + k) - static_cast<long>(w);
    const long tmax = 2 * (static_cast<long>(k) - 1);
    if (th >= 0 && tw >= 0 && th <= tmax && tw <= tmax) {
      return SpatialFit{s, static_cast<int>(th / 2), static_cast<int>(th - th / 2),
                        static_cast<int>(tw / 2), static_cast<int>(tw - tw / 2)};
    }
  }
  throw DimensionError(chain_err(idx, spec,
                                 "no stride/padding maps " + std::to_string(h) + "x" +
                                     std::to_string(w) + " to " + std::to_string(oh) + "x" +
                                     std::to_string(ow) + " with kernel " +
                                     std::to_string(k)));
}

std::size_t conv_extent(std::size_t in, std::size_t k, int stride, int beg, int end) {
  const std::size_t padded = in + static_cast<std::size_t>(beg + end);
  if (k > padded) throw DimensionError("kernel larger than padded input");
  return (padded - k) / static_cast<std::size_t>(stride) + 1;
}

}  // namespace

std::vector<ResolvedLayer> validate_chain(const Shape& input_shape,
                                          const std::vector<LayerSpec>& specs) {
  std::vector<ResolvedLayer> resolved;
  resolved.reserve(specs.size());
  Shape cur = input_shape;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    check_declared_in(i, spec, cur);
    ResolvedLayer r;
    r.spec = spec;
    r.in = cur;
    switch (spec.kind) {
      case LayerKind::kDense: {
        if (cur.size() != 1) {
          throw DimensionError(chain_err(i, spec,
                                         "requires a flat input, got " + shape_str(cur) +
                                             " (insert a flatten layer)"));
        }
        if (spec.size_out.size() != 1 || spec.size_out[0] == 0) {
          throw DimensionError(chain_err(i, spec, "needs size-out (output width)"));
        }
        r.out = spec.size_out;
        break;
      }
      case LayerKind::kConv: {
        if (cur.size() != 3) {
          throw DimensionError(chain_err(i, spec, "requires c x h x w input, got " + shape_str(cur)));
        }
        if (spec.kernel < 1) throw ConfigError(chain_err(i, spec, "needs a kernel size"));
        const std::size_t k = static_cast<std::size_t>(spec.kernel);
        const std::size_t h = cur[1];
        const std::size_t w = cur[2];
        if (spec.size_out.empty()) {
          throw DimensionError(chain_err(i, spec, "needs size-out (at least output channels)"));
        }
        const std::size_t c_out = spec.size_out[0];
        if (spec.stride > 0 || spec.padding >= 0) {
          r.stride = spec.stride > 0 ? spec.stride : 1;
          const int p = spec.padding >= 0 ? spec.padding : 0;
          r.pad = Padding2d{p, p, p, p};
          r.out = {c_out, conv_extent(h, k, r.stride, p, p), conv_extent(w, k, r.stride, p, p)};
          if (spec.size_out.size() == 3 && spec.size_out != r.out) {
            throw DimensionError(chain_err(i, spec,
                                           "declared size-out " + shape_str(spec.size_out) +
                                               " disagrees with computed " + shape_str(r.out)));
          }
        } else {
          if (spec.size_out.size() != 3) {
            throw DimensionError(chain_err(i, spec,
                                           "needs explicit stride/padding or a full c x h x w size-out"));
          }
          const SpatialFit fit = fit_conv_spatial(i, spec, h, w, spec.size_out[1],
                                                  spec.size_out[2], k);
          r.stride = fit.stride;
          r.pad = Padding2d{fit.beg_h, fit.beg_w, fit.end_h, fit.end_w};
          r.out = spec.size_out;
        }
        break;
      }
      case LayerKind::kMaxPool: {
        if (cur.size() != 3) {
          throw DimensionError(chain_err(i, spec, "requires c x h x w input, got " + shape_str(cur)));
        }
        if (spec.kernel < 1) throw ConfigError(chain_err(i, spec, "needs a window size"));
        const std::size_t k = static_cast<std::size_t>(spec.kernel);
        const std::size_t h = cur[1];
        const std::size_t w = cur[2];
        if (k > h || k > w) {
          throw DimensionError(chain_err(i, spec, "window exceeds input extent " + shape_str(cur)));
        }
        int stride = spec.stride > 0 ? spec.stride : spec.kernel;
        if (spec.stride == 0 && spec.size_out.size() == 3 && spec.size_out[1] > 1) {
          // Recover the stride the declared output implies, if the default
          // window-sized stride does not already match.
          const std::size_t oh = spec.size_out[1];
          if ((h - k) / k + 1 != oh) {
            bool found = false;
            for (int s = 1; s <= 8 && !found; ++s) {
              if ((h - k) / static_cast<std::size_t>(s) + 1 == oh) {
                stride = s;
                found = true;
              }
            }
            if (!found) {
              throw DimensionError(chain_err(i, spec, "no stride yields declared size-out"));
            }
          }
        }
        r.stride = stride;
        r.out = {cur[0], (h - k) / static_cast<std::size_t>(stride) + 1,
                 (w - k) / static_cast<std::size_t>(stride) + 1};
        if (spec.size_out.size() == 3 && spec.size_out != r.out) {
          throw DimensionError(chain_err(i, spec,
                                         "declared size-out " + shape_str(spec.size_out) +
                                             " disagrees with computed " + shape_str(r.out)));
        }
        break;
      }
      case LayerKind::kFlatten: {
        r.out = {numel(cur)};
        break;
      }
      case LayerKind::kDropout: {
        if (!(spec.rate >= 0.0 && spec.rate < 1.0)) {
          throw ConfigError(chain_err(i, spec, "rate must be in [0,1)"));
        }
        r.out = cur;
        break;
      }
      case LayerKind::kSoftmax:
      case LayerKind::kL2Normalize: {
        if (cur.size() != 1) {
          throw DimensionError(chain_err(i, spec, "requires a flat input, got " + shape_str(cur)));
        }
        r.out = cur;
        break;
      }
      case LayerKind::kRelu: {
        r.out = cur;
        break;
      }
    }
    if (!spec.size_out.empty() && spec.kind != LayerKind::kConv &&
        spec.kind != LayerKind::kMaxPool && spec.kind != LayerKind::kDense &&
        spec.size_out != r.out) {
      throw DimensionError(chain_err(i, spec,
                                     "declared size-out " + shape_str(spec.size_out) +
                                         " does not match computed " + shape_str(r.out)));
    }
    cur = r.out;
    resolved.push_back(std::move(r));
  }
  return resolved;
}

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor* ParameterSet::find(std::string_view name) {
  for (auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor* ParameterSet::find(std::string_view name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ParameterSet::zero_grads() {
  for (auto& [n, t] : items_) t.zero_grad();
}

void ParameterSet::attach_all(Tape& tape) {
  for (auto& [n, t] : items_) tape.watch(t);
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  fill_uniform(rng, t.values(), -bound, bound);
  return t;
}

namespace {

class DenseLayer final : public Layer {
 public:
  DenseLayer(Tensor w, Tensor b) : w_(std::move(w)), b_(std::move(b)) {}
  Tensor forward(const Tensor& x, ForwardCtx&) const override {
    return add_row_bias(matmul(x, w_), b_);
  }
  LayerKind kind() const override { return LayerKind::kDense; }

 private:
  Tensor w_, b_;
};

class ConvLayer final : public Layer {
 public:
  ConvLayer(Tensor kernels, Tensor bias, int stride, Padding2d pad)
      : kernels_(std::move(kernels)), bias_(std::move(bias)), stride_(stride), pad_(pad) {}
  Tensor forward(const Tensor& x, ForwardCtx&) const override {
    return add_channel_bias(conv2d(x, kernels_, stride_, pad_), bias_);
  }
  LayerKind kind() const override { return LayerKind::kConv; }

 private:
  Tensor kernels_, bias_;
  int stride_;
  Padding2d pad_;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(int window, int stride) : window_(window), stride_(stride) {}
  Tensor forward(const Tensor& x, ForwardCtx&) const override {
    return maxpool2d(x, window_, stride_);
  }
  LayerKind kind() const override { return LayerKind::kMaxPool; }

 private:
  int window_, stride_;
};

class ReluLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, ForwardCtx&) const override { return relu(x); }
  LayerKind kind() const override { return LayerKind::kRelu; }
};

class DropoutLayer final : public Layer {
 public:
  explicit DropoutLayer(double rate) : rate_(rate) {}
  Tensor forward(const Tensor& x, ForwardCtx& ctx) const override {
    if (!ctx.training || !ctx.dropout_enabled || rate_ == 0.0) return x;
    if (!ctx.dropout_rng) throw ContractError("dropout in training mode requires an RNG");
    // Inverted dropout: survivors scaled at train time, eval is identity.
    Tensor mask(x.shape());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate_);
    for (double& v : mask.values()) v = u(*ctx.dropout_rng) < rate_ ? 0.0 : keep_scale;
    return mul(x, mask);
  }
  LayerKind kind() const override { return LayerKind::kDropout; }

 private:
  double rate_;
};

class FlattenLayer final : public Layer {
 public:
  explicit FlattenLayer(std::size_t width) : width_(width) {}
  Tensor forward(const Tensor& x, ForwardCtx&) const override {
    return reshape(x, {x.shape()[0], width_});
  }
  LayerKind kind() const override { return LayerKind::kFlatten; }

 private:
  std::size_t width_;
};

class SoftmaxLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, ForwardCtx& ctx) const override {
    // Identity on the loss path: the cross-entropy op consumes the logits in
    // its stabilized form. Applied only when probabilities are requested.
    return ctx.apply_softmax ? softmax_rows(x) : x;
  }
  LayerKind kind() const override { return LayerKind::kSoftmax; }
};

class L2NormalizeLayer final : public Layer {
 public:
  Tensor forward(const Tensor& x, ForwardCtx&) const override {
    return l2_normalize_rows(x);
  }
  LayerKind kind() const override { return LayerKind::kL2Normalize; }
};

}  // namespace

LayerStack LayerStack::build(const std::vector<ResolvedLayer>& layers,
                             const std::string& prefix, std::mt19937_64& init_rng,
                             ParameterSet& params) {
  LayerStack stack;
  if (!layers.empty()) {
    stack.input_shape_ = layers.front().in;
    stack.output_shape_ = layers.back().out;
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ResolvedLayer& r = layers[i];
    const std::string base = prefix + "." + std::to_string(i);
    switch (r.spec.kind) {
      case LayerKind::kDense: {
        const std::size_t d_in = r.in[0];
        const std::size_t d_out = r.out[0];
        const Tensor w = params.add(base + ".w",
                                    glorot_uniform({d_in, d_out}, d_in, d_out, init_rng));
        const Tensor b = params.add(base + ".b", Tensor({d_out}));
        stack.layers_.push_back(std::make_shared<DenseLayer>(w, b));
        break;
      }
      case LayerKind::kConv: {
        const std::size_t c_in = r.in[0];
        const std::size_t c_out = r.out[0];
        const std::size_t k = static_cast<std::size_t>(r.spec.kernel);
        const std::size_t fan_in = c_in * k * k;
        const std::size_t fan_out = c_out * k * k;
        const Tensor w = params.add(base + ".w",
                                    glorot_uniform({c_out, c_in, k, k}, fan_in, fan_out, init_rng));
        const Tensor b = params.add(base + ".b", Tensor({c_out}));
        stack.layers_.push_back(std::make_shared<ConvLayer>(w, b, r.stride, r.pad));
        break;
      }
      case LayerKind::kMaxPool:
        stack.layers_.push_back(std::make_shared<MaxPoolLayer>(r.spec.kernel, r.stride));
        break;
      case LayerKind::kRelu:
        stack.layers_.push_back(std::make_shared<ReluLayer>());
        break;
      case LayerKind::kDropout:
        stack.layers_.push_back(std::make_shared<DropoutLayer>(r.spec.rate));
        break;
      case LayerKind::kFlatten:
        stack.layers_.push_back(std::make_shared<FlattenLayer>(r.out[0]));
        break;
      case LayerKind::kSoftmax:
        stack.layers_.push_back(std::make_shared<SoftmaxLayer>());
        break;
      case LayerKind::kL2Normalize:
        stack.layers_.push_back(std::make_shared<L2NormalizeLayer>());
        break;
    }
  }
  return stack;
}

Tensor LayerStack::forward(const Tensor& x, ForwardCtx& ctx) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->forward(cur, ctx);
  return cur;
}

}  // namespace gdvm
