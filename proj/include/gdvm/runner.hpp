#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "gdvm/checkpoint.hpp"
#include "gdvm/config.hpp"
#include "gdvm/metrics.hpp"
#include "gdvm/model.hpp"

namespace gdvm {

// Library implementation of the CLI commands. Every command writes its result
// files atomically (write-temp-then-rename) under the config's output
// directory.

struct MaterializedData {
  Dataset train;
  Dataset validation;
  Dataset test;  // may be empty (generators with test_fraction == 0)
};

// Generates or loads the dataset named by the spec, applies subsampling, and
// partitions it: synthetic pools are split three ways; IDX and zero-shot data
// arrive with their own test sets, so only validation is carved out.
MaterializedData materialize_dataset(const DatasetSpec& spec, const SplitSpec& split_spec);

// The unsplit dataset (train-side source), used by the latent export.
Dataset materialize_full(const DatasetSpec& spec);

struct SeedOutcome {
  std::uint64_t seed = 0;
  double train_loss, val_loss, test_loss;
  double accuracy, micro_f1, macro_f1, top1;  // NaN where not applicable
  double per_image_us;
  std::size_t clamp_events = 0;

  SeedOutcome();
};

struct SingleRun {
  GdvmModel model;
  SeedOutcome outcome;
  TrainTrace trace;
};

// One seed: build, train on data.train, evaluate losses and the task metric.
SingleRun train_single(const RunConfig& cfg, const MaterializedData& data,
                       std::uint64_t seed);

// Batched deterministic prediction over a whole dataset.
Prediction predict_dataset(const GdvmModel& model, const Dataset& data,
                           std::size_t batch = 512);
// Deterministic (z = mu, eval mode) task loss over a dataset.
double dataset_task_loss(const GdvmModel& model, const Dataset& data,
                         std::size_t batch = 512);
// Fills the task-metric fields of an outcome from test-set predictions.
void fill_task_metrics(SeedOutcome& outcome, const GdvmModel& model, const Dataset& test);

struct RunOutputs {
  std::vector<SeedOutcome> per_seed;
  nlohmann::json aggregate;
  std::vector<std::filesystem::path> checkpoints;
};

// cmd `train`: one run per seed; writes per_seed.csv, aggregate.json and a
// checkpoint per seed.
RunOutputs run_training(const RunConfig& cfg);

struct GridRow {
  double beta;
  std::size_t epochs;
  std::uint64_t seed;
  double metric;  // validation metric; NaN when the run diverged
  bool ok;
};

struct SweepSelection {
  double beta = 0.0;
  std::size_t epochs = 0;
};

// Pure function of the grid table: highest mean validation metric over cells
// whose every seed converged; ties prefer smaller beta, then fewer epochs.
SweepSelection select_best_cell(std::span<const GridRow> rows);

struct SweepOutputs {
  std::vector<GridRow> grid;
  SweepSelection best;
  RunOutputs final_run;  // retrained on train+validation, scored on test
};

// cmd `sweep`: trains every (beta, epochs) cell per seed, scores on the
// validation split, selects, then retrains on the full training set.
SweepOutputs run_sweep(const RunConfig& cfg, const SweepSpec& sweep);

struct EvalMode {
  bool mc = false;
  std::size_t samples = 0;
};
// "deterministic" or "mc:<n>".
EvalMode parse_eval_mode(std::string_view text);

enum class EvalTarget { kAuto, kTrain, kValidation, kTest };
EvalTarget eval_target_from_name(std::string_view name);

// cmd `eval`: loads a checkpoint and scores the chosen partition; writes and
// returns the JSON report.
nlohmann::json run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                        EvalMode mode, EvalTarget target,
                        const std::filesystem::path& out_path);

// cmd `export-latent`: one CSV row per sample, mu(x) coordinates then label.
void run_export_latent(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       const std::filesystem::path& out_csv);

// cmd `bench-time`: trains Baseline and GDVM on the same architecture at batch
// size 100 and reports wall-clock microseconds per image (median over epochs,
// warm-up excluded) plus their ratio.
nlohmann::json run_benchmark(const RunConfig& cfg);

void atomic_write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gdvm
