#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "gdvm/data.hpp"
#include "gdvm/nn.hpp"
#include "gdvm/optim.hpp"
#include "gdvm/task.hpp"
#include "gdvm/tensor.hpp"

namespace gdvm {

enum class Variant { kBaseline, kGsnn, kGdvm };

std::string variant_name(Variant v);
Variant variant_from_name(std::string_view name);

// Baseline: deterministic mu path, no log-variance head, no KL term.
// GSNN: samples z but the loss carries no KL term (beta = 0 behaviour).
// GDVM: samples z and adds beta * KL(N(mu,Sigma) || N(0,I)) to the task loss.
// `sample` exists as an explicit switch so the no-sampling GDVM reduction
// (z = mu) can be exercised directly.
struct VariantSpec {
  Variant tag = Variant::kGdvm;
  double beta = 0.0;
  bool sample = true;

  static VariantSpec baseline() { return {Variant::kBaseline, 0.0, false}; }
  static VariantSpec gsnn() { return {Variant::kGsnn, 0.0, true}; }
  static VariantSpec gdvm(double beta);

  bool has_logvar_head() const { return tag != Variant::kBaseline; }
  bool uses_kl() const { return tag == Variant::kGdvm; }
};

struct ModelSpec {
  Shape input_shape;            // per-sample feature shape
  std::size_t latent_dim = 0;   // k
  std::vector<LayerSpec> trunk;
  std::vector<LayerSpec> mu_head;
  std::vector<LayerSpec> logvar_head;
  std::vector<LayerSpec> classifier;
  VariantSpec variant;
  TaskSpec task;
};

// z = mu + eps (*) exp(logvar / 2); differentiable w.r.t. mu and logvar.
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps);

// Closed form KL(N(mu, diag(exp(logvar))) || N(0,I)): per-row
// 0.5 * sum_i(exp(logvar_i) + mu_i^2 - 1 - logvar_i), then batch mean.
Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& logvar);

// GDVM: task + beta*kl (the beta = 0 case takes the identical code path as
// GSNN so the reduction is exact); GSNN/Baseline: task loss alone. `kl` may be
// an empty tensor when the variant has no log-variance head.
Tensor total_loss(const Tensor& task_loss, const Tensor& kl, const VariantSpec& variant);

struct EncodeResult {
  Tensor mu;
  std::optional<Tensor> logvar;  // absent for the Baseline variant; clamped to [-10,10]
};

struct BatchTargets {
  std::vector<int> labels;  // multi-class
  Tensor multihot;          // multi-label
  Tensor semantic;          // zero-shot
};

struct Prediction {
  Tensor scores;            // class probabilities or semantic vectors, one row per sample
  std::vector<int> labels;  // argmax decisions (multi-class only)
  Tensor multihot;          // thresholded decisions (multi-label only)
};

class GdvmModel {
 public:
  // Validates the architecture chain (trunk -> heads -> classifier) and
  // initializes parameters from per-component streams of `seed`, so variants
  // sharing components start from bitwise-identical weights.
  static GdvmModel build(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const VariantSpec& variant() const { return spec_.variant; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t latent_dim() const { return spec_.latent_dim; }
  bool samples() const { return spec_.variant.sample && spec_.variant.has_logvar_head(); }

  std::size_t clamp_events() const { return clamp_events_; }
  void reset_clamp_events() { clamp_events_ = 0; }

  // Both heads evaluated on the shared trunk output. Flat feature rows are
  // reshaped to the trunk's per-sample input shape when it is convolutional.
  EncodeResult encode(const Tensor& x, ForwardCtx& ctx) const;

  // Classifier stack Phi applied to a latent batch.
  Tensor classify(const Tensor& z, ForwardCtx& ctx) const;

  struct BatchLoss {
    Tensor total;
    Tensor task;
    Tensor kl;  // empty when the variant has no log-variance head
  };

  // Full loss for one batch. eps is required (and consumed) only on the
  // sampling path.
  BatchLoss batch_loss(const Tensor& x, const BatchTargets& targets, const Tensor& eps,
                       ForwardCtx& ctx) const;

  Tensor task_loss(const Tensor& output, const BatchTargets& targets) const;

 private:
  ModelSpec spec_;
  LayerStack trunk_, mu_head_, logvar_head_, classifier_;
  ParameterSet params_;
  mutable std::size_t clamp_events_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  bool dropout = true;
  std::uint64_t seed = 0;
};

struct TrainTrace {
  std::vector<double> epoch_loss;       // mean total batch loss per epoch
  std::vector<double> epoch_task_loss;
  std::vector<double> epoch_kl;         // 0 where the variant has no KL value
  std::vector<double> epoch_seconds;    // wall-clock, monotonic
  std::size_t clamp_events = 0;
};

// Algorithm: per batch, sample eps ~ N(0,I) (sampling variants), form
// z = mu + eps*sigma (or z = mu), minimize the composite loss, update by
// backpropagation. Deterministic given the config seed. Aborts with a
// NumericError naming epoch/batch when the loss turns non-finite.
TrainTrace train(GdvmModel& model, const Dataset& data, const TrainConfig& cfg);

BatchTargets gather_targets(const Dataset& data, std::span<const std::size_t> indices);

// Deterministic inference: z = mu(x), dropout off, terminal softmax applied.
Prediction predict_deterministic(const GdvmModel& model, const Tensor& x);

// Monte-Carlo inference per the deterministic rule's alternative: draws z from
// the prior N(0,I), averages the probability outputs of Phi(z), then applies
// the task decision rule.
Prediction predict_mc(const GdvmModel& model, const Tensor& x, std::size_t n_samples,
                      std::mt19937_64& rng);
// Same, with caller-supplied latent draws (deterministic tests).
Prediction predict_mc_with_draws(const GdvmModel& model, const Tensor& x,
                                 const std::vector<Tensor>& draws);

}  // namespace gdvm
