#include "gdvm/config.hpp"

#include <fstream>

namespace gdvm {

using nlohmann::json;

namespace {

const json& need(const json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing field '" + where + key + "'");
  return *it;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

Shape shape_from_json(const json& j) {
  Shape s;
  for (const auto& v : j) s.push_back(v.get<std::size_t>());
  return s;
}

json shape_to_json(const Shape& s) {
  json j = json::array();
  for (std::size_t v : s) j.push_back(v);
  return j;
}

std::vector<LayerSpec> layers_from_json(const json& j) {
  std::vector<LayerSpec> out;
  for (const auto& item : j) out.push_back(layer_from_json(item));
  return out;
}

json layers_to_json(const std::vector<LayerSpec>& layers) {
  json j = json::array();
  for (const auto& l : layers) j.push_back(layer_to_json(l));
  return j;
}

TaskSpec task_from_json(const json& j) {
  TaskSpec task;
  task.family = task_family_from_name(need(j, "kind", "task.").get<std::string>());
  switch (task.family) {
    case TaskFamily::kMultiClass:
      task.output_dim = need(j, "classes", "task.").get<std::size_t>();
      break;
    case TaskFamily::kMultiLabel:
      task.output_dim = need(j, "labels", "task.").get<std::size_t>();
      break;
    case TaskFamily::kZeroShot:
      task.output_dim = need(j, "attr_dim", "task.").get<std::size_t>();
      break;
  }
  if (task.output_dim < 1) throw ConfigError("task output dimension must be >= 1");
  return task;
}

json task_to_json(const TaskSpec& task) {
  json j;
  j["kind"] = task_family_name(task.family);
  switch (task.family) {
    case TaskFamily::kMultiClass: j["classes"] = task.output_dim; break;
    case TaskFamily::kMultiLabel: j["labels"] = task.output_dim; break;
    case TaskFamily::kZeroShot: j["attr_dim"] = task.output_dim; break;
  }
  return j;
}

OptimizerConfig optimizer_from_json(const json& j) {
  OptimizerConfig cfg;
  cfg.kind = optimizer_kind_from_name(need(j, "kind", "optimizer.").get<std::string>());
  cfg.learning_rate = need(j, "learning_rate", "optimizer.").get<double>();
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate must be positive");
  cfg.momentum = get_or(j, "momentum", 0.9);
  cfg.rho = get_or(j, "rho", 0.9);
  cfg.beta1 = get_or(j, "beta1", 0.9);
  cfg.beta2 = get_or(j, "beta2", 0.999);
  cfg.epsilon = get_or(j, "epsilon", 1e-8);
  return cfg;
}

json optimizer_to_json(const OptimizerConfig& cfg) {
  json j;
  j["kind"] = optimizer_kind_name(cfg.kind);
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["rho"] = cfg.rho;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["epsilon"] = cfg.epsilon;
  return j;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec ds;
  ds.source = need(j, "source", "dataset.").get<std::string>();
  ds.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (ds.source == "blobs") {
    ds.n_classes = need(j, "n_classes", "dataset.").get<std::size_t>();
    ds.n_per_class = need(j, "n_per_class", "dataset.").get<std::size_t>();
    ds.dim = need(j, "dim", "dataset.").get<std::size_t>();
    ds.spread = need(j, "spread", "dataset.").get<double>();
  } else if (ds.source == "multilabel") {
    ds.n_labels = need(j, "n_labels", "dataset.").get<std::size_t>();
    ds.n_samples = need(j, "n_samples", "dataset.").get<std::size_t>();
    ds.dim = need(j, "dim", "dataset.").get<std::size_t>();
    ds.overlap = get_or(j, "overlap", 0.0);
    ds.positive_rate = get_or(j, "positive_rate", 0.25);
  } else if (ds.source == "zeroshot") {
    ds.n_seen = need(j, "n_seen", "dataset.").get<std::size_t>();
    ds.n_unseen = need(j, "n_unseen", "dataset.").get<std::size_t>();
    ds.attr_dim = need(j, "attr_dim", "dataset.").get<std::size_t>();
    ds.zs_per_class = need(j, "n_per_class", "dataset.").get<std::size_t>();
    ds.noise = need(j, "noise", "dataset.").get<double>();
    ds.feature_dim = get_or<std::size_t>(j, "feature_dim", 0);
  } else if (ds.source == "idx") {
    ds.images = need(j, "images", "dataset.").get<std::string>();
    ds.labels = need(j, "labels", "dataset.").get<std::string>();
    ds.test_images = get_or<std::string>(j, "test_images", "");
    ds.test_labels = get_or<std::string>(j, "test_labels", "");
  } else {
    throw ConfigError("dataset.source must be one of blobs|multilabel|zeroshot|idx, got '" +
                      ds.source + "'");
  }
  if (auto it = j.find("subsample"); it != j.end()) {
    SubsampleSpec sub;
    sub.n = need(*it, "n", "dataset.subsample.").get<std::size_t>();
    sub.seed = get_or<std::uint64_t>(*it, "seed", 0);
    sub.stratified = get_or(*it, "stratified", true);
    ds.subsample = sub;
  }
  return ds;
}

json dataset_to_json(const DatasetSpec& ds) {
  json j;
  j["source"] = ds.source;
  j["seed"] = ds.seed;
  if (ds.source == "blobs") {
    j["n_classes"] = ds.n_classes;
    j["n_per_class"] = ds.n_per_class;
    j["dim"] = ds.dim;
    j["spread"] = ds.spread;
  } else if (ds.source == "multilabel") {
    j["n_labels"] = ds.n_labels;
    j["n_samples"] = ds.n_samples;
    j["dim"] = ds.dim;
    j["overlap"] = ds.overlap;
    j["positive_rate"] = ds.positive_rate;
  } else if (ds.source == "zeroshot") {
    j["n_seen"] = ds.n_seen;
    j["n_unseen"] = ds.n_unseen;
    j["attr_dim"] = ds.attr_dim;
    j["n_per_class"] = ds.zs_per_class;
    j["noise"] = ds.noise;
    if (ds.feature_dim) j["feature_dim"] = ds.feature_dim;
  } else if (ds.source == "idx") {
    j["images"] = ds.images;
    j["labels"] = ds.labels;
    if (!ds.test_images.empty()) j["test_images"] = ds.test_images;
    if (!ds.test_labels.empty()) j["test_labels"] = ds.test_labels;
  }
  if (ds.subsample) {
    j["subsample"] = {{"n", ds.subsample->n},
                      {"seed", ds.subsample->seed},
                      {"stratified", ds.subsample->stratified}};
  }
  return j;
}

SplitSpec split_from_json(const json& j) {
  SplitSpec s;
  s.validation_fraction = get_or(j, "validation_fraction", 0.2);
  s.test_fraction = get_or(j, "test_fraction", 0.0);
  s.seed = get_or<std::uint64_t>(j, "seed", 0);
  s.stratified = get_or(j, "stratified", true);
  if (!(s.validation_fraction > 0.0 && s.validation_fraction < 1.0)) {
    throw ConfigError("split.validation_fraction must be in (0,1)");
  }
  if (!(s.test_fraction >= 0.0 && s.test_fraction < 1.0)) {
    throw ConfigError("split.test_fraction must be in [0,1)");
  }
  return s;
}

json split_to_json(const SplitSpec& s) {
  return json{{"validation_fraction", s.validation_fraction},
              {"test_fraction", s.test_fraction},
              {"seed", s.seed},
              {"stratified", s.stratified}};
}

}  // namespace

LayerSpec layer_from_json(const json& j) {
  LayerSpec spec;
  spec.kind = layer_kind_from_name(need(j, "op", "layer.").get<std::string>());
  if (auto it = j.find("size_in"); it != j.end()) spec.size_in = shape_from_json(*it);
  if (auto it = j.find("size_out"); it != j.end()) spec.size_out = shape_from_json(*it);
  spec.kernel = get_or(j, "kernel", 0);
  spec.stride = get_or(j, "stride", 0);
  spec.padding = get_or(j, "padding", -1);
  spec.rate = get_or(j, "rate", 0.0);
  if (spec.kind == LayerKind::kDropout && !(spec.rate >= 0.0 && spec.rate < 1.0)) {
    throw ConfigError("layer dropout rate must be in [0,1)");
  }
  return spec;
}

json layer_to_json(const LayerSpec& spec) {
  json j;
  j["op"] = layer_kind_name(spec.kind);
  if (!spec.size_in.empty()) j["size_in"] = shape_to_json(spec.size_in);
  if (!spec.size_out.empty()) j["size_out"] = shape_to_json(spec.size_out);
  if (spec.kernel) j["kernel"] = spec.kernel;
  if (spec.stride) j["stride"] = spec.stride;
  if (spec.padding >= 0) j["padding"] = spec.padding;
  if (spec.kind == LayerKind::kDropout) j["rate"] = spec.rate;
  return j;
}

VariantSpec RunConfig::variant_spec() const {
  switch (variant) {
    case Variant::kBaseline: return VariantSpec::baseline();
    case Variant::kGsnn: return VariantSpec::gsnn();
    case Variant::kGdvm: return VariantSpec::gdvm(beta);
  }
  throw ConfigError("invalid variant");
}

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  cfg.variant = variant_from_name(need(j, "variant", "").get<std::string>());
  cfg.beta = get_or(j, "beta", 0.0);
  if (cfg.beta < 0.0) throw ConfigError("beta must be non-negative");
  cfg.latent_dim = need(j, "latent_dim", "").get<std::size_t>();
  if (cfg.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  cfg.task = task_from_json(need(j, "task", ""));
  cfg.dataset = dataset_from_json(need(j, "dataset", ""));

  const json& arch = need(j, "architecture", "");
  cfg.architecture.input = shape_from_json(need(arch, "input", "architecture."));
  if (cfg.architecture.input.empty()) throw ConfigError("architecture.input must be non-empty");
  cfg.architecture.trunk = layers_from_json(get_or(arch, "trunk", json::array()));
  cfg.architecture.mu_head = layers_from_json(get_or(arch, "mu_head", json::array()));
  cfg.architecture.logvar_head = layers_from_json(get_or(arch, "logvar_head", json::array()));
  cfg.architecture.classifier = layers_from_json(get_or(arch, "classifier", json::array()));

  cfg.optimizer = optimizer_from_json(need(j, "optimizer", ""));
  cfg.epochs = need(j, "epochs", "").get<std::size_t>();
  cfg.batch_size = need(j, "batch_size", "").get<std::size_t>();
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  cfg.dropout = get_or(j, "dropout", true);
  for (const auto& s : need(j, "seeds", "")) cfg.seeds.push_back(s.get<std::uint64_t>());
  if (cfg.seeds.empty()) throw ConfigError("seeds must be non-empty");
  cfg.split = split_from_json(get_or(j, "split", json::object()));
  cfg.output_dir = get_or<std::string>(j, "output_dir", "out");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& cfg) {
  json j;
  j["variant"] = variant_name(cfg.variant);
  j["beta"] = cfg.beta;
  j["latent_dim"] = cfg.latent_dim;
  j["task"] = task_to_json(cfg.task);
  j["dataset"] = dataset_to_json(cfg.dataset);
  j["architecture"] = {{"input", shape_to_json(cfg.architecture.input)},
                       {"trunk", layers_to_json(cfg.architecture.trunk)},
                       {"mu_head", layers_to_json(cfg.architecture.mu_head)},
                       {"logvar_head", layers_to_json(cfg.architecture.logvar_head)},
                       {"classifier", layers_to_json(cfg.architecture.classifier)}};
  j["optimizer"] = optimizer_to_json(cfg.optimizer);
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["dropout"] = cfg.dropout;
  j["seeds"] = cfg.seeds;
  j["split"] = split_to_json(cfg.split);
  j["output_dir"] = cfg.output_dir;
  return j;
}

std::string sweep_metric_name(SweepMetric m) {
  switch (m) {
    case SweepMetric::kAccuracy: return "accuracy";
    case SweepMetric::kMicroF1: return "micro_f1";
    case SweepMetric::kTop1: return "top1";
  }
  return "?";
}

SweepMetric sweep_metric_from_name(std::string_view name) {
  if (name == "accuracy") return SweepMetric::kAccuracy;
  if (name == "micro_f1") return SweepMetric::kMicroF1;
  if (name == "top1") return SweepMetric::kTop1;
  throw ConfigError("unknown sweep metric '" + std::string(name) + "'");
}

SweepSpec parse_sweep_spec(const json& j) {
  SweepSpec spec;
  for (const auto& b : need(j, "beta_grid", "sweep.")) spec.beta_grid.push_back(b.get<double>());
  for (const auto& e : need(j, "epoch_grid", "sweep.")) {
    spec.epoch_grid.push_back(e.get<std::size_t>());
  }
  if (spec.beta_grid.empty() || spec.epoch_grid.empty()) {
    throw ConfigError("sweep grids must be non-empty");
  }
  for (double b : spec.beta_grid) {
    if (b < 0.0) throw ConfigError("sweep.beta_grid entries must be non-negative");
  }
  spec.metric = sweep_metric_from_name(need(j, "metric", "sweep.").get<std::string>());
  return spec;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open sweep file " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("sweep " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_sweep_spec(j);
}

json to_json(const SweepSpec& spec) {
  return json{{"beta_grid", spec.beta_grid},
              {"epoch_grid", spec.epoch_grid},
              {"metric", sweep_metric_name(spec.metric)}};
}

json model_spec_to_json(const ModelSpec& spec) {
  json j;
  j["input"] = shape_to_json(spec.input_shape);
  j["latent_dim"] = spec.latent_dim;
  j["trunk"] = layers_to_json(spec.trunk);
  j["mu_head"] = layers_to_json(spec.mu_head);
  j["logvar_head"] = layers_to_json(spec.logvar_head);
  j["classifier"] = layers_to_json(spec.classifier);
  j["variant"] = variant_name(spec.variant.tag);
  j["beta"] = spec.variant.beta;
  j["sample"] = spec.variant.sample;
  j["task"] = task_to_json(spec.task);
  return j;
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  spec.input_shape = shape_from_json(need(j, "input", "model."));
  spec.latent_dim = need(j, "latent_dim", "model.").get<std::size_t>();
  spec.trunk = layers_from_json(need(j, "trunk", "model."));
  spec.mu_head = layers_from_json(need(j, "mu_head", "model."));
  spec.logvar_head = layers_from_json(need(j, "logvar_head", "model."));
  spec.classifier = layers_from_json(need(j, "classifier", "model."));
  spec.variant.tag = variant_from_name(need(j, "variant", "model.").get<std::string>());
  spec.variant.beta = need(j, "beta", "model.").get<double>();
  spec.variant.sample = need(j, "sample", "model.").get<bool>();
  spec.task = task_from_json(need(j, "task", "model."));
  return spec;
}

ModelSpec model_spec_from_config(const RunConfig& cfg) {
  ModelSpec spec;
  spec.input_shape = cfg.architecture.input;
  spec.latent_dim = cfg.latent_dim;
  spec.trunk = cfg.architecture.trunk;
  spec.mu_head = cfg.architecture.mu_head;
  spec.logvar_head = cfg.architecture.logvar_head;
  spec.classifier = cfg.architecture.classifier;
  spec.variant = cfg.variant_spec();
  spec.task = cfg.task;
  return spec;
}

}  // namespace gdvm
