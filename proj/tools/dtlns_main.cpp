// dtlns: run the pipeline stages from the command line.
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dtlns/pipeline.hpp"

namespace pl = dtlns::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Dual-tree false-negative identification and hard negative sampling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string log_level = "info";
  app.add_option("--config", config_path, "Run config (key = value)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Run directory")->capture_default_str();
  app.add_option("--seed", seed, "Train only this seed");
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error")->capture_default_str();

  const std::pair<const char*, pl::Command> commands[] = {
      {"prepare", pl::Command::Prepare},         {"build-trees", pl::Command::BuildTrees},
      {"identify-fn", pl::Command::IdentifyFn},  {"train", pl::Command::Train},
      {"evaluate", pl::Command::Evaluate},       {"fn-accuracy", pl::Command::FnAccuracy},
  };
  const char* help[] = {"Load, k-core filter, split and optionally plant false negatives",
                        "Pretrain if needed, then build both index trees and item codes",
                        "Classify candidates and write the augmented train set",
                        "Train every configured seed and write results",
                        "Evaluate checkpoints on the test split",
                        "Measure identification accuracy on planted false negatives"};
  std::vector<CLI::App*> subs;
  for (std::size_t k = 0; k < std::size(commands); ++k) {
    subs.push_back(app.add_subcommand(commands[k].first, help[k]));
  }
  subs[4]->add_option("--checkpoint", checkpoint, "Evaluate one checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pl::exit_code::kUsage;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));

  dtlns::config::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = dtlns::config::load(config_path);
  } catch (const std::exception& e) {
    spdlog::error("config: {}", e.what());
    return pl::exit_code::kUsage;
  }
  if (seed) cfg.seeds = {*seed};

  for (std::size_t k = 0; k < subs.size(); ++k) {
    if (!subs[k]->parsed()) continue;
    std::optional<std::filesystem::path> ckpt;
    if (!checkpoint.empty()) ckpt = checkpoint;
    return pl::run(commands[k].second, cfg, out_dir, ckpt);
  }
  return pl::exit_code::kUsage;
}
