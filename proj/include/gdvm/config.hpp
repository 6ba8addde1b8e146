#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gdvm/data.hpp"
#include "gdvm/model.hpp"
#include "gdvm/nn.hpp"
#include "gdvm/optim.hpp"
#include "gdvm/task.hpp"

namespace gdvm {

// Run configuration, stored as JSON. Parsing validates every field and throws
// ConfigError naming the offending key; serialize/parse round-trips exactly.

struct ArchitectureSpec {
  Shape input;  // per-sample input shape
  std::vector<LayerSpec> trunk;
  std::vector<LayerSpec> mu_head;
  std::vector<LayerSpec> logvar_head;
  std::vector<LayerSpec> classifier;
};

struct SubsampleSpec {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct DatasetSpec {
  std::string source;  // blobs | multilabel | zeroshot | idx
  std::uint64_t seed = 0;
  // blobs
  std::size_t n_classes = 0, n_per_class = 0, dim = 0;
  double spread = 1.0;
  // multilabel
  std::size_t n_labels = 0, n_samples = 0;
  double overlap = 0.0, positive_rate = 0.25;
  // zeroshot
  std::size_t n_seen = 0, n_unseen = 0, attr_dim = 0, feature_dim = 0;
  std::size_t zs_per_class = 0;
  double noise = 0.0;
  // idx
  std::string images, labels, test_images, test_labels;
  std::optional<SubsampleSpec> subsample;
};

struct RunConfig {
  Variant variant = Variant::kGdvm;
  double beta = 0.0;
  std::size_t latent_dim = 1;
  TaskSpec task;
  DatasetSpec dataset;
  ArchitectureSpec architecture;
  OptimizerConfig optimizer;
  std::size_t epochs = 0;
  std::size_t batch_size = 32;
  bool dropout = true;
  std::vector<std::uint64_t> seeds;
  SplitSpec split;
  std::string output_dir = "out";

  VariantSpec variant_spec() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

enum class SweepMetric { kAccuracy, kMicroF1, kTop1 };

std::string sweep_metric_name(SweepMetric m);
SweepMetric sweep_metric_from_name(std::string_view name);

struct SweepSpec {
  std::vector<double> beta_grid;
  std::vector<std::size_t> epoch_grid;
  SweepMetric metric = SweepMetric::kAccuracy;
};

SweepSpec parse_sweep_spec(const nlohmann::json& j);
SweepSpec load_sweep_spec(const std::filesystem::path& path);
nlohmann::json to_json(const SweepSpec& spec);

// LayerSpec / ModelSpec serialization (shared with checkpoints).
nlohmann::json layer_to_json(const LayerSpec& spec);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// The model implied by a run config (variant, heads, classifier, task).
ModelSpec model_spec_from_config(const RunConfig& cfg);

}  // namespace gdvm
