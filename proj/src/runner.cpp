#include "gdvm/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "gdvm/idx.hpp"
#include "gdvm/rng.hpp"

namespace gdvm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(double v) { return std::isnan(v) ? std::string() : fmt_double(v); }

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Dataset generate_train_side(const DatasetSpec& spec) {
  if (spec.source == "blobs") {
    return gen_blobs(spec.seed, spec.n_classes, spec.n_per_class, spec.dim, spec.spread);
  }
  if (spec.source == "multilabel") {
    return gen_multilabel(spec.seed, spec.n_labels, spec.n_samples, spec.dim, spec.overlap,
                          spec.positive_rate);
  }
  if (spec.source == "zeroshot") {
    return gen_zeroshot(spec.seed, spec.n_seen, spec.n_unseen, spec.attr_dim,
                        spec.zs_per_class, spec.noise, spec.feature_dim)
        .train;
  }
  if (spec.source == "idx") {
    return load_idx(spec.images, spec.labels);
  }
  throw ConfigError("dataset.source must be one of blobs|multilabel|zeroshot|idx");
}

}  // namespace

SeedOutcome::SeedOutcome()
    : train_loss(kNaN),
      val_loss(kNaN),
      test_loss(kNaN),
      accuracy(kNaN),
      micro_f1(kNaN),
      macro_f1(kNaN),
      top1(kNaN),
      per_image_us(kNaN) {}

Dataset materialize_full(const DatasetSpec& spec) {
  Dataset data = generate_train_side(spec);
  if (spec.subsample) {
    data = subsample(data, spec.subsample->n, spec.subsample->seed, spec.subsample->stratified);
  }
  return data;
}

MaterializedData materialize_dataset(const DatasetSpec& spec, const SplitSpec& split_spec) {
  MaterializedData out;
  if (spec.source == "zeroshot") {
    const auto zs = gen_zeroshot(spec.seed, spec.n_seen, spec.n_unseen, spec.attr_dim,
                                 spec.zs_per_class, spec.noise, spec.feature_dim);
    Dataset train = zs.train;
    if (spec.subsample) {
      train = subsample(train, spec.subsample->n, spec.subsample->seed,
                        spec.subsample->stratified);
    }
    SplitSpec val_only = split_spec;
    val_only.test_fraction = 0.0;
    const Split s = split(train, val_only);
    out.train = s.train;
    out.validation = s.validation;
    out.test = zs.test;
    return out;
  }
  if (spec.source == "idx") {
    Dataset train = materialize_full(spec);
    SplitSpec val_only = split_spec;
    val_only.test_fraction = 0.0;
    const Split s = split(train, val_only);
    out.train = s.train;
    out.validation = s.validation;
    if (!spec.test_images.empty()) {
      out.test = load_idx(spec.test_images, spec.test_labels);
    }
    return out;
  }
  const Dataset pool = materialize_full(spec);
  const Split s = split(pool, split_spec);
  out.train = s.train;
  out.validation = s.validation;
  out.test = s.test;
  return out;
}

Prediction predict_dataset(const GdvmModel& model, const Dataset& data, std::size_t batch) {
  const std::size_t n = data.size();
  Prediction all;
  std::vector<std::size_t> idx(batch);
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t len = std::min(batch, n - start);
    idx.resize(len);
    for (std::size_t i = 0; i < len; ++i) idx[i] = start + i;
    const Dataset part = data.gather(idx);
    Prediction p = predict_deterministic(model, part.features);
    if (all.scores.empty()) {
      const std::size_t w = p.scores.shape()[1];
      all.scores = Tensor({n, w});
      if (!p.multihot.empty()) all.multihot = Tensor({n, w});
    }
    std::copy(p.scores.data(), p.scores.data() + p.scores.size(),
              all.scores.data() + start * p.scores.shape()[1]);
    if (!p.multihot.empty()) {
      std::copy(p.multihot.data(), p.multihot.data() + p.multihot.size(),
                all.multihot.data() + start * p.multihot.shape()[1]);
    }
    all.labels.insert(all.labels.end(), p.labels.begin(), p.labels.end());
  }
  return all;
}

double dataset_task_loss(const GdvmModel& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) return kNaN;
  const std::size_t n = data.size();
  double weighted = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t len = std::min(batch, n - start);
    idx.resize(len);
    for (std::size_t i = 0; i < len; ++i) idx[i] = start + i;
    const Dataset part = data.gather(idx);
    const BatchTargets targets = gather_targets(part, [&] {
      std::vector<std::size_t> all(len);
      for (std::size_t i = 0; i < len; ++i) all[i] = i;
      return all;
    }());
    ForwardCtx ctx;  // eval mode, no dropout, logits path
    EncodeResult enc = model.encode(part.features, ctx);
    const Tensor out = model.classify(enc.mu, ctx);
    weighted += model.task_loss(out, targets).item() * static_cast<double>(len);
  }
  return weighted / static_cast<double>(n);
}

void fill_task_metrics(SeedOutcome& outcome, const GdvmModel& model, const Dataset& test) {
  if (test.size() == 0) return;
  const Prediction pred = predict_dataset(model, test);
  switch (model.spec().task.family) {
    case TaskFamily::kMultiClass:
      outcome.accuracy = accuracy(pred.labels, test.labels);
      break;
    case TaskFamily::kMultiLabel: {
      const auto [micro, macro] = micro_macro_f1(pred.multihot, test.multihot);
      outcome.micro_f1 = micro;
      outcome.macro_f1 = macro;
      break;
    }
    case TaskFamily::kZeroShot:
      outcome.top1 = zero_shot_top1(pred.scores, test.unseen_prototypes, test.labels);
      break;
  }
}

SingleRun train_single(const RunConfig& cfg, const MaterializedData& data,
                       std::uint64_t seed) {
  ModelSpec spec = model_spec_from_config(cfg);
  GdvmModel model = GdvmModel::build(spec, seed);
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.optimizer = cfg.optimizer;
  tc.dropout = cfg.dropout;
  tc.seed = seed;
  TrainTrace trace = train(model, data.train, tc);

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.clamp_events = trace.clamp_events;
  if (!trace.epoch_seconds.empty()) {
    outcome.per_image_us =
        median(trace.epoch_seconds) * 1e6 / static_cast<double>(data.train.size());
  }
  outcome.train_loss = dataset_task_loss(model, data.train);
  outcome.val_loss = dataset_task_loss(model, data.validation);
  outcome.test_loss = dataset_task_loss(model, data.test);
  fill_task_metrics(outcome, model, data.test);
  return SingleRun{std::move(model), outcome, std::move(trace)};
}

void atomic_write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os << text;
  }
  fs::rename(tmp, path);
}

namespace {

// Deterministic columns only: wall-clock timing lives in its own file so the
// metrics CSV reproduces byte for byte under identical configs.
std::string per_seed_csv(std::span<const SeedOutcome> rows) {
  std::ostringstream os;
  os << "seed,accuracy,micro_f1,macro_f1,top1,train_loss,val_loss,test_loss,"
        "clamp_events\n";
  for (const auto& r : rows) {
    os << r.seed << "," << csv_field(r.accuracy) << "," << csv_field(r.micro_f1) << ","
       << csv_field(r.macro_f1) << "," << csv_field(r.top1) << "," << csv_field(r.train_loss)
       << "," << csv_field(r.val_loss) << "," << csv_field(r.test_loss) << ","
       << r.clamp_events << "\n";
  }
  return os.str();
}

std::string timing_csv(std::span<const SeedOutcome> rows) {
  std::ostringstream os;
  os << "seed,per_image_us\n";
  for (const auto& r : rows) os << r.seed << "," << csv_field(r.per_image_us) << "\n";
  return os.str();
}

json aggregate_json(std::span<const SeedOutcome> rows) {
  json metrics = json::object();
  auto put = [&](const char* name, auto getter) {
    std::vector<double> vals;
    for (const auto& r : rows) {
      const double v = getter(r);
      if (!std::isnan(v)) vals.push_back(v);
    }
    if (vals.empty()) return;
    const Aggregate agg = aggregate(vals);
    metrics[name] = {{"mean", agg.mean}, {"std", agg.stddev}, {"n", agg.n}};
  };
  put("accuracy", [](const SeedOutcome& r) { return r.accuracy; });
  put("micro_f1", [](const SeedOutcome& r) { return r.micro_f1; });
  put("macro_f1", [](const SeedOutcome& r) { return r.macro_f1; });
  put("top1", [](const SeedOutcome& r) { return r.top1; });
  put("train_loss", [](const SeedOutcome& r) { return r.train_loss; });
  put("val_loss", [](const SeedOutcome& r) { return r.val_loss; });
  put("test_loss", [](const SeedOutcome& r) { return r.test_loss; });
  put("per_image_us", [](const SeedOutcome& r) { return r.per_image_us; });
  return metrics;
}

RunOutputs run_seeds_and_write(const RunConfig& cfg, const MaterializedData& data,
                               const fs::path& out_dir, const std::string& tag) {
  RunOutputs outputs;
  fs::create_directories(out_dir);
  for (std::uint64_t seed : cfg.seeds) {
    SingleRun run = train_single(cfg, data, seed);
    outputs.per_seed.push_back(run.outcome);
    const fs::path ckpt = out_dir / (tag + "checkpoint_seed" + std::to_string(seed) + ".gdvm");
    const fs::path tmp = ckpt.string() + ".tmp";
    save_checkpoint(tmp, run.model);
    fs::rename(tmp, ckpt);
    outputs.checkpoints.push_back(ckpt);
  }
  json agg;
  agg["config"] = to_json(cfg);
  agg["metrics"] = aggregate_json(outputs.per_seed);
  outputs.aggregate = agg;
  atomic_write_text(out_dir / (tag + "per_seed.csv"), per_seed_csv(outputs.per_seed));
  atomic_write_text(out_dir / (tag + "per_seed_timing.csv"), timing_csv(outputs.per_seed));
  atomic_write_text(out_dir / (tag + "aggregate.json"), agg.dump(2) + "\n");
  return outputs;
}

double validation_metric(const GdvmModel& model, const Dataset& validation,
                         SweepMetric metric) {
  SeedOutcome probe;
  fill_task_metrics(probe, model, validation);
  switch (metric) {
    case SweepMetric::kAccuracy: return probe.accuracy;
    case SweepMetric::kMicroF1: return probe.micro_f1;
    case SweepMetric::kTop1: return probe.top1;
  }
  return kNaN;
}

}  // namespace

RunOutputs run_training(const RunConfig& cfg) {
  const MaterializedData data = materialize_dataset(cfg.dataset, cfg.split);
  return run_seeds_and_write(cfg, data, cfg.output_dir, "");
}

SweepSelection select_best_cell(std::span<const GridRow> rows) {
  struct Cell {
    double sum = 0.0;
    std::size_t n = 0;
    bool ok = true;
  };
  std::map<std::pair<double, std::size_t>, Cell> cells;
  for (const auto& r : rows) {
    Cell& c = cells[{r.beta, r.epochs}];
    if (!r.ok || std::isnan(r.metric)) {
      c.ok = false;
      continue;
    }
    c.sum += r.metric;
    c.n += 1;
  }
  bool found = false;
  SweepSelection best;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (const auto& [key, cell] : cells) {
    if (!cell.ok || cell.n == 0) continue;
    const double mean = cell.sum / static_cast<double>(cell.n);
    // Map iteration is ordered by (beta, epochs), so strict improvement
    // implements the tie rule: smaller beta, then fewer epochs.
    if (mean > best_mean) {
      best_mean = mean;
      best = {key.first, key.second};
      found = true;
    }
  }
  if (!found) throw NumericError("sweep: every grid cell diverged; nothing to select");
  return best;
}

SweepOutputs run_sweep(const RunConfig& cfg, const SweepSpec& sweep) {
  const MaterializedData data = materialize_dataset(cfg.dataset, cfg.split);
  if (data.validation.size() == 0) throw ConfigError("sweep: validation split is empty");

  SweepOutputs out;
  for (double beta : sweep.beta_grid) {
    for (std::size_t epochs : sweep.epoch_grid) {
      for (std::uint64_t seed : cfg.seeds) {
        RunConfig cell_cfg = cfg;
        cell_cfg.beta = beta;
        cell_cfg.epochs = epochs;
        GridRow row{beta, epochs, seed, kNaN, false};
        try {
          SingleRun run = train_single(cell_cfg, data, seed);
          row.metric = validation_metric(run.model, data.validation, sweep.metric);
          row.ok = !std::isnan(row.metric);
        } catch (const NumericError&) {
          row.ok = false;
        }
        out.grid.push_back(row);
      }
    }
  }
  out.best = select_best_cell(out.grid);

  std::ostringstream grid_csv;
  grid_csv << "beta,epochs,seed," << sweep_metric_name(sweep.metric) << ",status\n";
  for (const auto& r : out.grid) {
    grid_csv << fmt_double(r.beta) << "," << r.epochs << "," << r.seed << ","
             << csv_field(r.metric) << "," << (r.ok ? "ok" : "failed") << "\n";
  }
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  atomic_write_text(out_dir / "grid.csv", grid_csv.str());

  // Retrain on the full training set (train + validation) at the selected cell.
  RunConfig final_cfg = cfg;
  final_cfg.beta = out.best.beta;
  final_cfg.epochs = out.best.epochs;
  MaterializedData final_data;
  final_data.train = concat(data.train, data.validation);
  final_data.test = data.test;
  out.final_run = run_seeds_and_write(final_cfg, final_data, out_dir, "final_");

  json selection;
  selection["best_beta"] = out.best.beta;
  selection["best_epochs"] = out.best.epochs;
  selection["metric"] = sweep_metric_name(sweep.metric);
  atomic_write_text(out_dir / "selection.json", selection.dump(2) + "\n");
  return out;
}

EvalMode parse_eval_mode(std::string_view text) {
  if (text == "deterministic") return {false, 0};
  if (text.rfind("mc:", 0) == 0) {
    const std::string n(text.substr(3));
    try {
      const long v = std::stol(n);
      if (v < 1) throw ConfigError("eval mode mc:<n> requires n >= 1");
      return {true, static_cast<std::size_t>(v)};
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad eval mode '" + std::string(text) + "'");
    }
  }
  throw ConfigError("eval mode must be 'deterministic' or 'mc:<n>', got '" +
                    std::string(text) + "'");
}

EvalTarget eval_target_from_name(std::string_view name) {
  if (name == "auto") return EvalTarget::kAuto;
  if (name == "train") return EvalTarget::kTrain;
  if (name == "validation") return EvalTarget::kValidation;
  if (name == "test") return EvalTarget::kTest;
  throw ConfigError("eval target must be auto|train|validation|test");
}

nlohmann::json run_eval(const RunConfig& cfg, const fs::path& checkpoint, EvalMode mode,
                        EvalTarget target, const fs::path& out_path) {
  GdvmModel model = load_checkpoint(checkpoint);
  const MaterializedData data = materialize_dataset(cfg.dataset, cfg.split);
  const Dataset* part = nullptr;
  switch (target) {
    case EvalTarget::kAuto: part = data.test.size() ? &data.test : &data.train; break;
    case EvalTarget::kTrain: part = &data.train; break;
    case EvalTarget::kValidation: part = &data.validation; break;
    case EvalTarget::kTest: part = &data.test; break;
  }
  if (part->size() == 0) throw ConfigError("eval: selected partition is empty");

  const auto t0 = std::chrono::steady_clock::now();
  Prediction pred;
  if (mode.mc) {
    auto rng = seeded_stream(cfg.seeds.front(), "eval.mc");
    pred = predict_mc(model, part->features, mode.samples, rng);
  } else {
    pred = predict_dataset(model, *part);
  }
  const double elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - t0).count();

  SeedOutcome outcome;
  switch (model.spec().task.family) {
    case TaskFamily::kMultiClass:
      outcome.accuracy = accuracy(pred.labels, part->labels);
      break;
    case TaskFamily::kMultiLabel: {
      const auto [micro, macro] = micro_macro_f1(pred.multihot, part->multihot);
      outcome.micro_f1 = micro;
      outcome.macro_f1 = macro;
      break;
    }
    case TaskFamily::kZeroShot:
      outcome.top1 = zero_shot_top1(pred.scores, part->unseen_prototypes, part->labels);
      break;
  }

  json report;
  report["checkpoint"] = checkpoint.string();
  report["mode"] = mode.mc ? ("mc:" + std::to_string(mode.samples)) : "deterministic";
  report["samples_evaluated"] = part->size();
  report["elapsed_seconds"] = elapsed;
  if (!std::isnan(outcome.accuracy)) report["accuracy"] = outcome.accuracy;
  if (!std::isnan(outcome.micro_f1)) report["micro_f1"] = outcome.micro_f1;
  if (!std::isnan(outcome.macro_f1)) report["macro_f1"] = outcome.macro_f1;
  if (!std::isnan(outcome.top1)) report["top1"] = outcome.top1;
  if (!mode.mc) report["task_loss"] = dataset_task_loss(model, *part);
  atomic_write_text(out_path, report.dump(2) + "\n");
  return report;
}

void run_export_latent(const RunConfig& cfg, const fs::path& checkpoint,
                       const fs::path& out_csv) {
  GdvmModel model = load_checkpoint(checkpoint);
  const Dataset data = materialize_full(cfg.dataset);
  const std::size_t n = data.size();
  const std::size_t k = model.latent_dim();

  std::ostringstream os;
  for (std::size_t j = 0; j < k; ++j) os << "mu" << j << ",";
  os << "label\n";
  constexpr std::size_t kBatch = 512;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += kBatch) {
    const std::size_t len = std::min(kBatch, n - start);
    idx.resize(len);
    for (std::size_t i = 0; i < len; ++i) idx[i] = start + i;
    const Dataset part = data.gather(idx);
    ForwardCtx ctx;
    const EncodeResult enc = model.encode(part.features, ctx);
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        os << fmt_double(enc.mu.data()[i * k + j]) << ",";
      }
      if (!data.labels.empty()) {
        os << part.labels[i] << "\n";
      } else if (!data.multihot.empty()) {
        // Multi-label rows carry the active label indices joined by ';'.
        const std::size_t l_count = data.multihot.shape()[1];
        std::string joined;
        for (std::size_t l = 0; l < l_count; ++l) {
          if (part.multihot.data()[i * l_count + l] != 0.0) {
            if (!joined.empty()) joined += ';';
            joined += std::to_string(l);
          }
        }
        os << joined << "\n";
      } else {
        os << "\n";
      }
    }
  }
  atomic_write_text(out_csv, os.str());
}

nlohmann::json run_benchmark(const RunConfig& cfg) {
  if (cfg.epochs < 3) {
    throw ConfigError("bench-time needs epochs >= 3 (warm-up plus timed epochs)");
  }
  const MaterializedData data = materialize_dataset(cfg.dataset, cfg.split);
  const std::size_t warmup = 2;

  auto time_variant = [&](Variant v) {
    RunConfig variant_cfg = cfg;
    variant_cfg.variant = v;
    variant_cfg.batch_size = 100;  // measurement protocol pins the batch size
    ModelSpec spec = model_spec_from_config(variant_cfg);
    GdvmModel model = GdvmModel::build(spec, cfg.seeds.front());
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = variant_cfg.batch_size;
    tc.optimizer = cfg.optimizer;
    tc.dropout = cfg.dropout;
    tc.seed = cfg.seeds.front();
    const TrainTrace trace = train(model, data.train, tc);
    std::vector<double> timed(trace.epoch_seconds.begin() + warmup, trace.epoch_seconds.end());
    return median(timed) * 1e6 / static_cast<double>(data.train.size());
  };

  const double baseline_us = time_variant(Variant::kBaseline);
  const double gdvm_us = time_variant(Variant::kGdvm);

  json report;
  report["baseline_us_per_image"] = baseline_us;
  report["gdvm_us_per_image"] = gdvm_us;
  report["ratio"] = gdvm_us / baseline_us;
  report["batch_size"] = 100;
  report["epochs"] = cfg.epochs;
  report["warmup_epochs"] = warmup;
  report["train_images"] = data.train.size();
  // Reference figures reported alongside the measurements for context only.
  report["paper_reference"] = {{"baseline_us_per_image", 296.52},
                               {"gdvm_us_per_image", 299.22},
                               {"hardware", "GTX 1080"}};
  fs::create_directories(cfg.output_dir);
  atomic_write_text(fs::path(cfg.output_dir) / "timing.json", report.dump(2) + "\n");
  return report;
}

}  // namespace gdvm
