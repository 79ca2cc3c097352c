#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "metacp/expcli/experiments.hpp"
#include "metacp/expcli/io.hpp"

// Subcommands of the experiment CLI. Each command runs every seed in the
// config and writes its outputs under config.out_dir; file names are
// returned in the order written.
namespace metacp::exp {

// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kFile = 2, kGateFailure = 3 };

struct CommandResult {
  std::vector<std::filesystem::path> files;
  int exit_code = kOk;
  std::string summary;  // printed by the CLI
};

// scratch-<cat>-s<seed>.{curve.csv,stats.csv,ckpt}
CommandResult cmd_train_scratch(const ExperimentConfig& config);

// meta-<cat>-s<seed>.{ckpt,history.csv}. Checkpoint tag "meta:<cat>:<iter>".
CommandResult cmd_meta_train(const ExperimentConfig& config);

// adapt-<src>-<tgt>-s<seed>.{curve.csv,stats.csv,ckpt}. The source category
// is read from the checkpoint tag.
CommandResult cmd_meta_adapt(const ExperimentConfig& config,
                             const std::filesystem::path& checkpoint);

// transfer-<tgt>-s<seed>.{curve.csv,stats.csv,ckpt}
CommandResult cmd_transfer(const ExperimentConfig& config,
                           const std::filesystem::path& source_checkpoint);

// oracle.csv. exit_code is kGateFailure when the report does not pass.
CommandResult cmd_oracle_check(const ExperimentConfig& config);

// <out>/plot.svg and <out>/plot.csv (merged long format).
CommandResult cmd_plot(const std::vector<std::filesystem::path>& csvs,
                       const std::filesystem::path& out_dir);

// Category named by a checkpoint tag of the form "<kind>:<category>[:...]".
sim::Category tag_category(const std::string& tag);

// Full command line: `metacp <subcommand> [options]`. Returns the exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace metacp::exp
