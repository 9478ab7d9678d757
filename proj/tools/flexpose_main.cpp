#include <optional>
#include <string>

#include <CLI11.hpp>

#include "flexpose/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"FlexPose: few-shot pose distribution adaptation"};
  app.require_subcommand(1);

  static const char* kCommands[] = {"gen-data", "train-source", "adapt",
                                    "sweep-layers", "sample", "eval",
                                    "render", "report"};
  static const char* kHelp[] = {
      "generate source/target/holdout pose files",
      "fit the source generator by moment matching",
      "calibrate the transfer matrix from the few-shot targets",
      "adapt once per candidate layer set and compare losses",
      "sample poses from the adapted generator",
      "compare two pose files (MMD^2, FD, and PCK/MSE when aligned)",
      "export PNG + SVG stick figures for a pose file",
      "aggregate manifests and metrics into report.json"};

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string chosen;

  for (size_t i = 0; i < 8; ++i) {
    CLI::App* sub = app.add_subcommand(kCommands[i], kHelp[i]);
    sub->add_option("--config", config_path, "run config JSON")->required();
    sub->add_option("--seed", [&](const CLI::results_t& rs) {
      seed = std::stoull(rs[0]);
      return true;
    }, "override config seed");
    sub->add_option("--out", [&](const CLI::results_t& rs) {
      out_dir = rs[0];
      return true;
    }, "override config out_dir");
    sub->callback([&, name = std::string(kCommands[i])] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return flexpose::cli::run_command(chosen, config_path, seed, out_dir);
}
