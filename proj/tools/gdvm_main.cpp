// gdvm: command-line harness for training, sweeping, evaluating and
// benchmarking the variational classifier variants.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdvm/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw gdvm::ConfigError("--seeds-override: no seeds parsed");
  return seeds;
}

gdvm::RunConfig load_config_with_overrides(const std::string& config_path,
                                           const std::string& seeds_override,
                                           const std::string& out_override) {
  gdvm::RunConfig cfg = gdvm::load_run_config(config_path);
  if (!seeds_override.empty()) cfg.seeds = parse_seed_list(seeds_override);
  if (!out_override.empty()) cfg.output_dir = out_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative-discriminative variational classifier harness"};
  app.require_subcommand(1);

  std::string config_path, sweep_path, checkpoint_path, out_path;
  std::string mode = "deterministic";
  std::string target = "auto";
  std::string seeds_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
    cmd->add_option("--seeds-override", seeds_override, "comma-separated seed list");
    cmd->add_option("--out", out_path, "output directory / file override");
  };

  CLI::App* cmd_train = app.add_subcommand("train", "train one run per seed");
  add_common(cmd_train);

  CLI::App* cmd_sweep = app.add_subcommand("sweep", "beta/epoch grid search with validation");
  add_common(cmd_sweep);
  cmd_sweep->add_option("--sweep", sweep_path, "sweep specification (JSON)")->required();

  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(cmd_eval);
  cmd_eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  cmd_eval->add_option("--mode", mode, "deterministic or mc:<n>");
  cmd_eval->add_option("--on", target, "partition: auto|train|validation|test");

  CLI::App* cmd_export = app.add_subcommand("export-latent", "write mu(x) embeddings as CSV");
  add_common(cmd_export);
  cmd_export->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();

  CLI::App* cmd_bench = app.add_subcommand("bench-time", "per-image training time comparison");
  add_common(cmd_bench);

  CLI11_PARSE(app, argc, argv);

  try {
    const gdvm::RunConfig cfg =
        load_config_with_overrides(config_path, seeds_override, out_path);
    if (app.got_subcommand(cmd_train)) {
      const auto outputs = gdvm::run_training(cfg);
      std::printf("trained %zu seed(s); outputs in %s\n", outputs.per_seed.size(),
                  cfg.output_dir.c_str());
    } else if (app.got_subcommand(cmd_sweep)) {
      const auto sweep = gdvm::load_sweep_spec(sweep_path);
      const auto outputs = gdvm::run_sweep(cfg, sweep);
      std::printf("sweep selected beta=%g epochs=%zu; outputs in %s\n", outputs.best.beta,
                  outputs.best.epochs, cfg.output_dir.c_str());
    } else if (app.got_subcommand(cmd_eval)) {
      const std::filesystem::path report_path =
          out_path.empty() ? std::filesystem::path(cfg.output_dir) / "eval.json"
                           : std::filesystem::path(out_path);
      const auto report = gdvm::run_eval(cfg, checkpoint_path, gdvm::parse_eval_mode(mode),
                                         gdvm::eval_target_from_name(target), report_path);
      std::printf("%s\n", report.dump(2).c_str());
    } else if (app.got_subcommand(cmd_export)) {
      const std::filesystem::path csv_path =
          out_path.empty() ? std::filesystem::path(cfg.output_dir) / "latent.csv"
                           : std::filesystem::path(out_path);
      gdvm::run_export_latent(cfg, checkpoint_path, csv_path);
      std::printf("latent embeddings written to %s\n", csv_path.string().c_str());
    } else if (app.got_subcommand(cmd_bench)) {
      const auto report = gdvm::run_benchmark(cfg);
      std::printf("%s\n", report.dump(2).c_str());
    }
  } catch (const gdvm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const gdvm::NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const gdvm::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const gdvm::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitData;
  } catch (const gdvm::CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
