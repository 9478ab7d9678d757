#pragma once

#include <optional>
#include <string>

#include "flexpose/synth.hpp"
#include "flexpose/train.hpp"

namespace flexpose::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Resolved run configuration. Exactly one of {spec, file} per data side;
// defaults are materialized here so the manifest records every tunable.
struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";

  gen::GeneratorConfig generator;

  std::optional<synth::PoseDistributionSpec> source_spec;
  std::optional<std::string> source_file;
  std::optional<synth::ShiftSpec> target_shift;
  std::optional<std::string> target_file;

  int n_source = 5000;
  int n_holdout = 5000;
  int shots = 30;

  train::SourceTrainConfig source_train;
  train::AdaptConfig adapt;

  int sample_count = 5000;
  bool sample_rasters = false;

  std::string eval_a, eval_b;
  double pck_rho = 0.1;
  double canvas_px = 64.0;

  std::string render_poses;
  int render_w = 64, render_h = 64;

  std::vector<std::vector<int>> sweep_sets;
};

RunConfig load_config(const std::string& path);

// Known artifact locations under out_dir.
struct Artifacts {
  std::string out_dir;
  std::string source_poses() const { return out_dir + "/poses/source.jsonl"; }
  std::string target_shots() const {
    return out_dir + "/poses/target_shots.jsonl";
  }
  std::string target_holdout() const {
    return out_dir + "/poses/target_holdout.jsonl";
  }
  std::string source_checkpoint() const { return out_dir + "/model/source.fxp"; }
  std::string adapted_checkpoint() const {
    return out_dir + "/model/adapted.fxp";
  }
  std::string samples() const { return out_dir + "/samples/adapted.jsonl"; }
  std::string train_loss() const { return out_dir + "/reports/train_loss.csv"; }
  std::string adapt_loss() const { return out_dir + "/reports/adapt_loss.csv"; }
  std::string sweep_csv() const { return out_dir + "/reports/sweep.csv"; }
  std::string eval_csv() const { return out_dir + "/reports/eval.csv"; }
  std::string eval_json() const { return out_dir + "/reports/eval.json"; }
  std::string report_json() const { return out_dir + "/report.json"; }
  std::string manifest(const std::string& command) const {
    return out_dir + "/manifests/" + command + ".json";
  }
};

// Runs one subcommand. Returns 0 on success, 2 on configuration errors,
// 3 on numerical failures.
int run_command(const std::string& command, const std::string& config_path,
                std::optional<uint64_t> seed_override,
                std::optional<std::string> out_override);

uint32_t crc32_file(const std::string& path);

}  // namespace flexpose::cli
