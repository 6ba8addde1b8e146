#include "gdvm/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "gdvm/losses.hpp"
#include "gdvm/ops.hpp"
#include "gdvm/rng.hpp"

namespace gdvm {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kGsnn: return "gsnn";
    case Variant::kGdvm: return "gdvm";
  }
  return "?";
}

Variant variant_from_name(std::string_view name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "gsnn") return Variant::kGsnn;
  if (name == "gdvm") return Variant::kGdvm;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

VariantSpec VariantSpec::gdvm(double beta) {
  if (beta < 0.0) throw ConfigError("beta must be non-negative");
  return {Variant::kGdvm, beta, true};
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& eps) {
  if (mu.shape() != logvar.shape() || mu.shape() != eps.shape()) {
    throw DimensionError("reparameterize: shapes disagree, mu " + shape_str(mu.shape()) +
                         ", logvar " + shape_str(logvar.shape()) + ", eps " +
                         shape_str(eps.shape()));
  }
  return add(mu, mul(eps, exp(scale(logvar, 0.5))));
}

Tensor kl_to_standard_normal(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw DimensionError("kl_to_standard_normal: mu " + shape_str(mu.shape()) +
                         " vs logvar " + shape_str(logvar.shape()));
  }
  if (mu.rank() > 2) {
    throw DimensionError("kl_to_standard_normal: expects [k] or [batch x k]");
  }
  const double batch = mu.rank() == 2 ? static_cast<double>(mu.shape()[0]) : 1.0;
  // 0.5 * sum(exp(logvar) + mu^2 - 1 - logvar), averaged over the batch rows.
  Tensor terms = sub(add(exp(logvar), mul(mu, mu)), add(logvar, Tensor::scalar(1.0)));
  return scale(sum(terms), 0.5 / batch);
}

Tensor total_loss(const Tensor& task_loss, const Tensor& kl, const VariantSpec& variant) {
  if (variant.beta < 0.0) throw ConfigError("beta must be non-negative");
  if (variant.uses_kl() && variant.beta != 0.0) {
    if (kl.empty()) throw ContractError("total_loss: GDVM with beta > 0 requires a KL value");
    return add(task_loss, scale(kl, variant.beta));
  }
  // GSNN and the beta = 0 case share this exact path, making the reduction
  // identity bitwise.
  return task_loss;
}

GdvmModel GdvmModel::build(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (spec.input_shape.empty()) throw ConfigError("input_shape must be non-empty");
  if (spec.task.output_dim < 1) throw ConfigError("task output dimension must be >= 1");

  GdvmModel model;
  model.spec_ = spec;

  const auto trunk = validate_chain(spec.input_shape, spec.trunk);
  const Shape trunk_out = trunk.empty() ? spec.input_shape : trunk.back().out;

  const auto mu = validate_chain(trunk_out, spec.mu_head);
  const Shape mu_out = mu.empty() ? trunk_out : mu.back().out;
  if (mu_out != Shape{spec.latent_dim}) {
    throw DimensionError("mu head produces " + shape_str(mu_out) + ", expected [" +
                         std::to_string(spec.latent_dim) + "]");
  }

  std::vector<ResolvedLayer> logvar;
  if (spec.variant.has_logvar_head()) {
    logvar = validate_chain(trunk_out, spec.logvar_head);
    const Shape lv_out = logvar.empty() ? trunk_out : logvar.back().out;
    if (lv_out != Shape{spec.latent_dim}) {
      throw DimensionError("logvar head produces " + shape_str(lv_out) + ", expected [" +
                           std::to_string(spec.latent_dim) + "]");
    }
  }

  const auto classifier = validate_chain({spec.latent_dim}, spec.classifier);
  const Shape phi_out = classifier.empty() ? Shape{spec.latent_dim} : classifier.back().out;
  if (phi_out != Shape{spec.task.output_dim}) {
    throw DimensionError("classifier produces " + shape_str(phi_out) + ", task expects [" +
                         std::to_string(spec.task.output_dim) + "]");
  }

  // Per-component init streams keep shared components bitwise identical
  // across variants with the same seed (Baseline simply skips the logvar
  // stream).
  auto trunk_rng = seeded_stream(seed, "init.trunk");
  auto mu_rng = seeded_stream(seed, "init.mu");
  auto logvar_rng = seeded_stream(seed, "init.logvar");
  auto phi_rng = seeded_stream(seed, "init.phi");
  model.trunk_ = LayerStack::build(trunk, "trunk", trunk_rng, model.params_);
  model.mu_head_ = LayerStack::build(mu, "mu", mu_rng, model.params_);
  if (spec.variant.has_logvar_head()) {
    model.logvar_head_ = LayerStack::build(logvar, "logvar", logvar_rng, model.params_);
  }
  model.classifier_ = LayerStack::build(classifier, "phi", phi_rng, model.params_);
  return model;
}

EncodeResult GdvmModel::encode(const Tensor& x, ForwardCtx& ctx) const {
  if (x.rank() != 2) throw DimensionError("encode: expects [batch x features]");
  const std::size_t batch = x.shape()[0];
  const std::size_t want = numel(spec_.input_shape);
  if (x.shape()[1] != want) {
    throw DimensionError("encode: feature width " + std::to_string(x.shape()[1]) +
                         " does not match model input " + shape_str(spec_.input_shape));
  }
  Tensor cur = x;
  if (spec_.input_shape.size() > 1) {
    Shape batched = spec_.input_shape;
    batched.insert(batched.begin(), batch);
    cur = reshape(cur, batched);
  }
  Tensor t = trunk_.forward(cur, ctx);
  Tensor mu_out = mu_head_.forward(t, ctx);
  if (!spec_.variant.has_logvar_head()) {
    return {mu_out, std::nullopt};
  }
  Tensor lv = logvar_head_.forward(t, ctx);
  lv = clamp(lv, -10.0, 10.0, &clamp_events_);
  return {mu_out, lv};
}

Tensor GdvmModel::classify(const Tensor& z, ForwardCtx& ctx) const {
  return classifier_.forward(z, ctx);
}

Tensor GdvmModel::task_loss(const Tensor& output, const BatchTargets& targets) const {
  switch (spec_.task.family) {
    case TaskFamily::kMultiClass:
      return cross_entropy_loss(output, targets.labels);
    case TaskFamily::kMultiLabel:
      return binary_cross_entropy_loss(sigmoid(output), targets.multihot);
    case TaskFamily::kZeroShot:
      return l2_semantic_loss(output, targets.semantic);
  }
  throw ContractError("unreachable task family");
}

GdvmModel::BatchLoss GdvmModel::batch_loss(const Tensor& x, const BatchTargets& targets,
                                           const Tensor& eps, ForwardCtx& ctx) const {
  EncodeResult enc = encode(x, ctx);
  Tensor z;
  if (samples()) {
    if (eps.empty()) throw ContractError("batch_loss: sampling variant requires eps");
    z = reparameterize(enc.mu, *enc.logvar, eps);
  } else {
    z = enc.mu;
  }
  Tensor out = classify(z, ctx);
  BatchLoss loss;
  loss.task = task_loss(out, targets);
  if (enc.logvar) loss.kl = kl_to_standard_normal(enc.mu, *enc.logvar);
  loss.total = total_loss(loss.task, loss.kl, spec_.variant);
  return loss;
}

BatchTargets gather_targets(const Dataset& data, std::span<const std::size_t> indices) {
  BatchTargets out;
  switch (data.task.family) {
    case TaskFamily::kMultiClass:
      out.labels.reserve(indices.size());
      for (std::size_t i : indices) out.labels.push_back(data.labels[i]);
      break;
    case TaskFamily::kMultiLabel: {
      const std::size_t l = data.multihot.shape()[1];
      out.multihot = Tensor({indices.size(), l});
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = data.multihot.data() + indices[i] * l;
        std::copy(src, src + l, out.multihot.data() + i * l);
      }
      break;
    }
    case TaskFamily::kZeroShot: {
      const std::size_t a = data.semantic.shape()[1];
      out.semantic = Tensor({indices.size(), a});
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = data.semantic.data() + indices[i] * a;
        std::copy(src, src + a, out.semantic.data() + i * a);
      }
      break;
    }
  }
  return out;
}

namespace {

Tensor gather_features(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t d = data.feature_dim();
  Tensor x({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = data.features.data() + indices[i] * d;
    std::copy(src, src + d, x.data() + i * d);
  }
  return x;
}

}  // namespace

TrainTrace train(GdvmModel& model, const Dataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw ConfigError("train: dataset is empty");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (data.task.family != model.spec().task.family) {
    throw ConfigError("train: dataset task does not match model task");
  }

  auto shuffle_rng = seeded_stream(cfg.seed, "train.shuffle");
  auto eps_rng = seeded_stream(cfg.seed, "train.eps");
  auto dropout_rng = seeded_stream(cfg.seed, "train.dropout");
  Optimizer optimizer(cfg.optimizer);

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainTrace trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total_sum = 0.0, task_sum = 0.0, kl_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const std::span<const std::size_t> batch_idx(order.data() + start, len);
      Tensor x = gather_features(data, batch_idx);
      BatchTargets targets = gather_targets(data, batch_idx);

      Tape tape;
      model.params().zero_grads();
      model.params().attach_all(tape);
      ForwardCtx ctx;
      ctx.training = true;
      ctx.dropout_enabled = cfg.dropout;
      ctx.dropout_rng = &dropout_rng;

      Tensor eps;
      if (model.samples()) {
        eps = Tensor({len, model.latent_dim()});
        fill_normal(eps_rng, eps.values());
      }
      const auto loss = model.batch_loss(x, targets, eps, ctx);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("training aborted: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      tape.backward(loss.total);
      optimizer.step(model.params());

      total_sum += total;
      task_sum += loss.task.item();
      kl_sum += loss.kl.empty() ? 0.0 : loss.kl.item();
      ++batches;
    }
    const auto t1 = std::chrono::steady_clock::now();
    const double denom = static_cast<double>(batches);
    trace.epoch_loss.push_back(total_sum / denom);
    trace.epoch_task_loss.push_back(task_sum / denom);
    trace.epoch_kl.push_back(kl_sum / denom);
    trace.epoch_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  trace.clamp_events = model.clamp_events();
  return trace;
}

namespace {

Prediction decide(const GdvmModel& model, Tensor scores) {
  Prediction pred;
  const std::size_t m = scores.shape()[0];
  const std::size_t w = scores.shape()[1];
  switch (model.spec().task.family) {
    case TaskFamily::kMultiClass: {
      pred.labels.reserve(m);
      const double* xs = scores.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = xs + i * w;
        pred.labels.push_back(
            static_cast<int>(std::max_element(row, row + w) - row));
      }
      break;
    }
    case TaskFamily::kMultiLabel: {
      pred.multihot = Tensor({m, w});
      for (std::size_t i = 0; i < m * w; ++i) {
        pred.multihot.data()[i] = scores.data()[i] > 0.5 ? 1.0 : 0.0;
      }
      break;
    }
    case TaskFamily::kZeroShot:
      break;  // nearest-prototype assignment happens in the metrics layer
  }
  pred.scores = std::move(scores);
  return pred;
}

// Probability (or semantic) outputs of Phi for a given latent batch.
Tensor probability_output(const GdvmModel& model, const Tensor& z, ForwardCtx& ctx) {
  Tensor out = model.classify(z, ctx);
  if (model.spec().task.family == TaskFamily::kMultiLabel) return sigmoid(out);
  return out;  // softmax handled by the terminal layer; zero-shot is the raw vector
}

}  // namespace

Prediction predict_deterministic(const GdvmModel& model, const Tensor& x) {
  ForwardCtx ctx;
  ctx.training = false;
  ctx.apply_softmax = true;
  EncodeResult enc = model.encode(x, ctx);
  return decide(model, probability_output(model, enc.mu, ctx));
}

Prediction predict_mc_with_draws(const GdvmModel& model, const Tensor& x,
                                 const std::vector<Tensor>& draws) {
  if (draws.empty()) throw ConfigError("predict_mc: n_samples must be >= 1");
  ForwardCtx ctx;
  ctx.training = false;
  ctx.apply_softmax = true;
  const std::size_t batch = x.shape()[0];
  Tensor acc;
  for (const Tensor& z : draws) {
    if (z.shape() != Shape{batch, model.latent_dim()}) {
      throw DimensionError("predict_mc: draw shape " + shape_str(z.shape()) +
                           " does not match [batch x k]");
    }
    Tensor p = probability_output(model, z, ctx);
    acc = acc.empty() ? p : add(acc, p);
  }
  return decide(model, scale(acc, 1.0 / static_cast<double>(draws.size())));
}

Prediction predict_mc(const GdvmModel& model, const Tensor& x, std::size_t n_samples,
                      std::mt19937_64& rng) {
  if (n_samples < 1) throw ConfigError("predict_mc: n_samples must be >= 1");
  const std::size_t batch = x.shape()[0];
  std::vector<Tensor> draws;
  draws.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor z({batch, model.latent_dim()});
    fill_normal(rng, z.values());
    draws.push_back(std::move(z));
  }
  return predict_mc_with_draws(model, x, draws);
}

}  // namespace gdvm
