#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gdvm/checkpoint.hpp"
#include "gdvm/config.hpp"
#include "gdvm/runner.hpp"

using namespace gdvm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json blobs_config(const std::string& out_dir) {
  return json::parse(R"({
    "variant": "gdvm",
    "beta": 0.5,
    "latent_dim": 2,
    "task": {"kind": "multi_class", "classes": 3},
    "dataset": {"source": "blobs", "seed": 7, "n_classes": 3, "n_per_class": 40,
                "dim": 2, "spread": 0.6},
    "architecture": {
      "input": [2],
      "trunk": [{"op": "dense", "size_out": [16]}, {"op": "relu"}],
      "mu_head": [{"op": "dense", "size_out": [2]}],
      "logvar_head": [{"op": "dense", "size_out": [2]}],
      "classifier": [{"op": "dense", "size_out": [8]}, {"op": "relu"},
                     {"op": "dense", "size_out": [3]}, {"op": "softmax"}]
    },
    "optimizer": {"kind": "adam", "learning_rate": 0.01},
    "epochs": 12,
    "batch_size": 20,
    "dropout": true,
    "seeds": [1, 2],
    "split": {"validation_fraction": 0.2, "test_fraction": 0.25, "seed": 3,
              "stratified": true},
    "output_dir": ")" + out_dir + R"("
  })");
}

std::string slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config round trip is exact") {
  const json j = blobs_config("out");
  const RunConfig cfg = parse_run_config(j);
  const json recoded = to_json(cfg);
  const RunConfig cfg2 = parse_run_config(recoded);
  CHECK(to_json(cfg2) == recoded);
  CHECK(cfg2.beta == cfg.beta);
  CHECK(cfg2.seeds == cfg.seeds);
  CHECK(cfg2.architecture.trunk.size() == cfg.architecture.trunk.size());
}

TEST_CASE("config validation names the offending field") {
  json j = blobs_config("out");
  SUBCASE("missing variant") {
    j.erase("variant");
    try {
      parse_run_config(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("variant") != std::string::npos);
    }
  }
  SUBCASE("negative beta") {
    j["beta"] = -1.0;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("zero batch size") {
    j["batch_size"] = 0;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("empty seeds") {
    j["seeds"] = json::array();
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("unknown dataset source") {
    j["dataset"] = {{"source", "imagenet"}};
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
  SUBCASE("bad validation fraction") {
    j["split"]["validation_fraction"] = 0.0;
    CHECK_THROWS_AS(parse_run_config(j), ConfigError);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const RunConfig cfg = parse_run_config(blobs_config("out"));
  GdvmModel model = GdvmModel::build(model_spec_from_config(cfg), 42);
  const fs::path dir = fresh_dir("gdvm_ckpt_test");
  const fs::path path = dir / "model.gdvm";
  save_checkpoint(path, model);
  GdvmModel loaded = load_checkpoint(path);

  auto it1 = model.params().begin();
  auto it2 = loaded.params().begin();
  for (; it1 != model.params().end(); ++it1, ++it2) {
    CHECK(it1->first == it2->first);
    REQUIRE(it1->second.size() == it2->second.size());
    for (std::size_t i = 0; i < it1->second.size(); ++i) {
      CHECK(it1->second[i] == it2->second[i]);  // exact double equality
    }
  }

  SUBCASE("truncated checkpoints are rejected") {
    const std::string full = slurp(path);
    const fs::path cut_path = dir / "cut.gdvm";
    std::ofstream os(cut_path, std::ios::binary);
    os.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
    os.close();
    CHECK_THROWS_AS(load_checkpoint(cut_path), CheckpointError);
  }
}

TEST_CASE("run_training writes deterministic outputs") {
  const fs::path dir = fresh_dir("gdvm_train_cmd");
  RunConfig cfg = parse_run_config(blobs_config((dir / "a").string()));
  cfg.epochs = 4;

  const RunOutputs first = run_training(cfg);
  CHECK(first.per_seed.size() == 2);
  CHECK(fs::exists(dir / "a" / "per_seed.csv"));
  CHECK(fs::exists(dir / "a" / "aggregate.json"));
  CHECK(first.checkpoints.size() == 2);
  for (const auto& c : first.checkpoints) CHECK(fs::exists(c));

  // Rerunning the identical config reproduces the CSV byte for byte.
  const std::string csv1 = slurp(dir / "a" / "per_seed.csv");
  run_training(cfg);
  CHECK(slurp(dir / "a" / "per_seed.csv") == csv1);

  SUBCASE("zero epochs still writes a report") {
    RunConfig zero = cfg;
    zero.output_dir = (dir / "zero").string();
    zero.epochs = 0;
    const RunOutputs out = run_training(zero);
    CHECK(out.per_seed.size() == 2);
    CHECK(out.aggregate["metrics"].contains("accuracy"));
  }
}

TEST_CASE("sweep selection") {
  SUBCASE("one-cell grid selects that cell") {
    const std::vector<GridRow> rows{{0.5, 10, 1, 0.9, true}, {0.5, 10, 2, 0.8, true}};
    const SweepSelection best = select_best_cell(rows);
    CHECK(best.beta == 0.5);
    CHECK(best.epochs == 10);
  }
  SUBCASE("diverged cells are excluded") {
    const std::vector<GridRow> rows{{0.1, 10, 1, 0.99, true},
                                    {0.1, 10, 2, std::nan(""), false},
                                    {1.0, 10, 1, 0.7, true},
                                    {1.0, 10, 2, 0.7, true}};
    const SweepSelection best = select_best_cell(rows);
    CHECK(best.beta == 1.0);
  }
  SUBCASE("ties prefer smaller beta then fewer epochs") {
    const std::vector<GridRow> rows{{0.5, 20, 1, 0.9, true},
                                    {0.5, 10, 1, 0.9, true},
                                    {0.1, 30, 1, 0.9, true}};
    const SweepSelection best = select_best_cell(rows);
    CHECK(best.beta == 0.1);
    CHECK(best.epochs == 30);
    const std::vector<GridRow> rows2{{0.5, 20, 1, 0.9, true}, {0.5, 10, 1, 0.9, true}};
    CHECK(select_best_cell(rows2).epochs == 10);
  }
  SUBCASE("selection is a pure function of the table") {
    const std::vector<GridRow> rows{{0.1, 5, 1, 0.8, true}, {0.5, 5, 1, 0.85, true}};
    const SweepSelection a = select_best_cell(rows);
    const SweepSelection b = select_best_cell(rows);
    CHECK(a.beta == b.beta);
    CHECK(a.epochs == b.epochs);
  }
  SUBCASE("all-failed grid throws") {
    const std::vector<GridRow> rows{{0.1, 5, 1, std::nan(""), false}};
    CHECK_THROWS_AS(select_best_cell(rows), NumericError);
  }
}

TEST_CASE("sweep command produces the full grid table") {
  const fs::path dir = fresh_dir("gdvm_sweep_cmd");
  RunConfig cfg = parse_run_config(blobs_config(dir.string()));
  cfg.epochs = 2;
  cfg.seeds = {1, 2};
  SweepSpec sweep;
  sweep.beta_grid = {0.1, 1.0};
  sweep.epoch_grid = {2, 4};
  sweep.metric = SweepMetric::kAccuracy;

  const SweepOutputs out = run_sweep(cfg, sweep);
  CHECK(out.grid.size() == 2 * 2 * 2);  // |beta| * |epochs| * |seeds|
  CHECK(fs::exists(dir / "grid.csv"));
  CHECK(fs::exists(dir / "selection.json"));
  CHECK(fs::exists(dir / "final_aggregate.json"));
  CHECK(out.final_run.per_seed.size() == 2);
}

TEST_CASE("eval command") {
  const fs::path dir = fresh_dir("gdvm_eval_cmd");
  RunConfig cfg = parse_run_config(blobs_config(dir.string()));
  // Converged run on clearly separable blobs.
  cfg.dataset.spread = 0.2;
  cfg.beta = 0.1;
  cfg.epochs = 40;
  cfg.seeds = {1};
  const RunOutputs trained = run_training(cfg);

  SUBCASE("deterministic mode is reproducible and accurate on separable data") {
    const json r1 = run_eval(cfg, trained.checkpoints[0], parse_eval_mode("deterministic"),
                             EvalTarget::kTrain, dir / "eval1.json");
    const json r2 = run_eval(cfg, trained.checkpoints[0], parse_eval_mode("deterministic"),
                             EvalTarget::kTrain, dir / "eval2.json");
    CHECK(r1["accuracy"] == r2["accuracy"]);
    CHECK(r1["accuracy"].get<double>() >= 0.99);
  }
  SUBCASE("mc mode runs and reports sample count") {
    const json r = run_eval(cfg, trained.checkpoints[0], parse_eval_mode("mc:32"),
                            EvalTarget::kTest, dir / "eval_mc.json");
    CHECK(r["mode"] == "mc:32");
    CHECK(r.contains("accuracy"));
  }
  SUBCASE("mode strings are validated") {
    CHECK_THROWS_AS(parse_eval_mode("mc:0"), ConfigError);
    CHECK_THROWS_AS(parse_eval_mode("sampled"), ConfigError);
  }
}

TEST_CASE("latent export") {
  const fs::path dir = fresh_dir("gdvm_latent_cmd");
  RunConfig cfg = parse_run_config(blobs_config(dir.string()));
  cfg.epochs = 3;
  cfg.seeds = {1};
  const RunOutputs trained = run_training(cfg);
  const fs::path csv = dir / "latent.csv";
  run_export_latent(cfg, trained.checkpoints[0], csv);

  std::ifstream is(csv);
  std::string header;
  std::getline(is, header);
  CHECK(header == "mu0,mu1,label");  // k = 2 gives three columns
  std::size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 120);  // full generated dataset, one row per sample
}

TEST_CASE("benchmark reports both variants and the paper context") {
  const fs::path dir = fresh_dir("gdvm_bench_cmd");
  RunConfig cfg = parse_run_config(blobs_config(dir.string()));
  cfg.epochs = 4;
  cfg.seeds = {1};
  const json report = run_benchmark(cfg);
  CHECK(report["baseline_us_per_image"].get<double>() > 0.0);
  CHECK(report["gdvm_us_per_image"].get<double>() > 0.0);
  CHECK(report["ratio"].get<double>() > 0.0);
  CHECK(report["batch_size"] == 100);
  CHECK(report["paper_reference"]["baseline_us_per_image"].get<double>() ==
        doctest::Approx(296.52));
  CHECK(report["paper_reference"]["gdvm_us_per_image"].get<double>() ==
        doctest::Approx(299.22));
  CHECK(fs::exists(dir / "timing.json"));
}
