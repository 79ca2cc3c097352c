#include "metacp/expcli/commands.hpp"

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

namespace metacp::exp {

namespace fs = std::filesystem;

namespace {

std::string cat_name(sim::Category c) { return std::string(sim::to_string(c)); }

void emit(CommandResult& r, const fs::path& path, std::string_view content) {
  write_file_atomic(path, content);
  r.files.push_back(path);
}

void emit_resolved(CommandResult& r, const ExperimentConfig& c, const std::string& stem) {
  emit(r, c.out_dir / (stem + ".resolved-config.json"), dump_config(c));
}

void emit_run(CommandResult& r, const ExperimentConfig& c, const std::string& stem,
              const TrainingRun& run, const std::string& tag) {
  const RewardCurve curves[] = {run.curve};
  emit(r, c.out_dir / (stem + ".curve.csv"), curve_csv(curves));
  emit(r, c.out_dir / (stem + ".stats.csv"), stats_csv(run.stats));
  const fs::path ckpt = c.out_dir / (stem + ".ckpt");
  fs::create_directories(c.out_dir);
  nn::save_checkpoint(ckpt, to_checkpoint(run.model, tag));
  r.files.push_back(ckpt);

  char line[160];
  std::snprintf(line, sizeof line, "%s seed %llu: final-%zu mean %.6g, epochs-to-90%% %zu\n",
                run.curve.label.c_str(), static_cast<unsigned long long>(run.curve.seed),
                kFinalWindow, final_mean(run.curve.raw), epochs_to_fraction(run.curve));
  r.summary += line;
}

nn::Checkpoint read_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw FileError("checkpoint not found: " + path.string());
  try {
    return nn::load_checkpoint(path);
  } catch (const FileError&) {
    throw;
  } catch (const std::exception& e) {
    throw FileError(path.string() + ": " + e.what());
  }
}

void check_pairs(const ppo::PolicyModel& model, const ExperimentConfig& c,
                 const fs::path& path) {
  if (model.actor.spec.heads != static_cast<std::size_t>(c.physical.K)) {
    throw sim::ConfigError(path.string() + " was trained for " +
                           std::to_string(model.actor.spec.heads) + " pairs, config has K=" +
                           std::to_string(c.physical.K));
  }
}

}  // namespace

sim::Category tag_category(const std::string& tag) {
  const auto first = tag.find(':');
  if (first == std::string::npos) throw FileError("checkpoint tag '" + tag + "' names no category");
  const auto second = tag.find(':', first + 1);
  const std::string name = tag.substr(first + 1, second == std::string::npos
                                                     ? std::string::npos
                                                     : second - first - 1);
  try {
    return sim::parse_category(name);
  } catch (const sim::ConfigError&) {
    throw FileError("checkpoint tag '" + tag + "' names no category");
  }
}

CommandResult cmd_train_scratch(const ExperimentConfig& c) {
  c.validate();
  CommandResult r;
  const std::string cat = cat_name(c.category);
  emit_resolved(r, c, "train-scratch-" + cat);
  for (auto seed : c.seeds) {
    const auto run = run_scratch(c, c.category, seed);
    emit_run(r, c, "scratch-" + cat + "-s" + std::to_string(seed), run, "scratch:" + cat);
  }
  return r;
}

CommandResult cmd_meta_train(const ExperimentConfig& c) {
  c.validate();
  CommandResult r;
  const std::string cat = cat_name(c.category);
  emit_resolved(r, c, "meta-train-" + cat);
  for (auto seed : c.seeds) {
    const auto state = run_meta_train(c, c.category, seed);
    const std::string stem = "meta-" + cat + "-s" + std::to_string(seed);
    const fs::path ckpt = c.out_dir / (stem + ".ckpt");
    fs::create_directories(c.out_dir);
    nn::save_checkpoint(ckpt, to_checkpoint(state.meta_model, "meta:" + cat + ":" +
                                                                  std::to_string(state.iteration)));
    r.files.push_back(ckpt);
    emit(r, c.out_dir / (stem + ".history.csv"), history_csv(state.history));

    char line[160];
    const auto& h = state.history;
    std::snprintf(line, sizeof line, "meta:%s seed %llu: %zu iterations, adaptation loss %.6g -> %.6g\n",
                  cat.c_str(), static_cast<unsigned long long>(seed), state.iteration,
                  h.empty() ? 0.0 : h.front().mean_adaptation_loss,
                  h.empty() ? 0.0 : h.back().mean_adaptation_loss);
    r.summary += line;
  }
  return r;
}

CommandResult cmd_meta_adapt(const ExperimentConfig& c, const fs::path& checkpoint) {
  c.validate();
  const auto ckpt = read_checkpoint(checkpoint);
  const auto source = tag_category(ckpt.tag);
  const auto model = from_checkpoint(ckpt);
  check_pairs(model, c, checkpoint);
  CommandResult r;
  const std::string pair = cat_name(source) + "-" + cat_name(c.category);
  emit_resolved(r, c, "meta-adapt-" + pair);
  for (auto seed : c.seeds) {
    const auto run = run_meta_adapt(c, model, source, c.category, seed);
    emit_run(r, c, "adapt-" + pair + "-s" + std::to_string(seed), run,
             "adapt:" + cat_name(c.category) + ":" + cat_name(source));
  }
  return r;
}

CommandResult cmd_transfer(const ExperimentConfig& c, const fs::path& source_checkpoint) {
  c.validate();
  const auto ckpt = read_checkpoint(source_checkpoint);
  const auto model = from_checkpoint(ckpt);
  check_pairs(model, c, source_checkpoint);
  CommandResult r;
  const std::string cat = cat_name(c.category);
  emit_resolved(r, c, "transfer-" + cat);
  for (auto seed : c.seeds) {
    const auto run = run_transfer(c, model, c.category, seed);
    emit_run(r, c, "transfer-" + cat + "-s" + std::to_string(seed), run, "transfer:" + cat);
  }
  return r;
}

CommandResult cmd_oracle_check(const ExperimentConfig& c) {
  c.validate();
  CommandResult r;
  emit_resolved(r, c, "oracle-check");
  const auto report = oracle_check(c.physical, c.oracle_instances, c.oracle_grid_step,
                                   c.seeds.front());
  std::string csv =
      "instance,pairs,solver_feasible,oracle_feasible,solver_gain,oracle_gain,relative_gap\n";
  for (const auto& row : report.rows) {
    csv += std::to_string(row.instance) + ',' + std::to_string(row.pairs) + ',' +
           (row.solver_feasible ? "1" : "0") + ',' + (row.oracle_feasible ? "1" : "0") + ',' +
           format_number(row.solver_gain) + ',' + format_number(row.oracle_gain) + ',' +
           format_number(row.relative_gap) + '\n';
  }
  emit(r, c.out_dir / "oracle.csv", csv);
  char line[160];
  std::snprintf(line, sizeof line,
                "instances %zu, max relative gap %.3g, feasibility agreement %.4f: %s\n",
                report.rows.size(), report.max_relative_gap, report.agreement_rate,
                report.passed() ? "ok" : "FAILED");
  r.summary = line;
  r.exit_code = report.passed() ? kOk : kGateFailure;
  return r;
}

CommandResult cmd_plot(const std::vector<fs::path>& csvs, const fs::path& out_dir) {
  if (csvs.empty()) throw std::invalid_argument("plot: no input files");
  std::vector<RewardCurve> curves;
  for (const auto& path : csvs) {
    auto parsed = parse_curve_csv(read_file(path), path.string());
    for (auto& c : parsed) curves.push_back(std::move(c));
  }
  if (curves.empty()) throw FileError("plot: input files contain no rows");
  for (const auto& c : curves) {
    if (c.raw.size() != curves.front().raw.size()) {
      throw FileError("plot: mismatched lengths (" + curves.front().label + " has " +
                      std::to_string(curves.front().raw.size()) + " epochs, " + c.label +
                      " has " + std::to_string(c.raw.size()) + ")");
    }
  }
  CommandResult r;
  emit(r, out_dir / "plot.svg", render_svg(curves));
  emit(r, out_dir / "plot.csv", curve_csv(curves));
  r.summary = std::to_string(curves.size()) + " curves plotted\n";
  return r;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Meta-RL cooperative perception experiments", "metacp"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> category;
  std::optional<std::size_t> epochs;
  std::string checkpoint;
  std::vector<std::string> csvs;
  std::string plot_out = "plot";

  auto common = [&](CLI::App* sub, bool with_category) {
    sub->add_option("--config", config_path, "JSON experiment config");
    sub->add_option("--seed", seed, "run a single seed instead of the config's list");
    sub->add_option("--out", out_dir, "output directory");
    if (with_category) {
      sub->add_option("--category", category, "low|medium|high|general")
          ->check(CLI::IsMember({"low", "medium", "high", "general"}));
    }
  };

  auto* scratch = app.add_subcommand("train-scratch", "PPO from a random initialization");
  common(scratch, true);
  scratch->add_option("--epochs", epochs, "training epochs");
  auto* meta_train = app.add_subcommand("meta-train", "first-order meta-training");
  common(meta_train, true);
  auto* meta_adapt = app.add_subcommand("meta-adapt", "adapt a meta checkpoint to a new task");
  common(meta_adapt, true);
  meta_adapt->add_option("--epochs", epochs, "adaptation epochs");
  meta_adapt->add_option("--checkpoint", checkpoint, "meta checkpoint")->required();
  auto* transfer = app.add_subcommand("transfer", "fine-tune a trained PPO checkpoint");
  common(transfer, true);
  transfer->add_option("--epochs", epochs, "training epochs");
  transfer->add_option("--checkpoint", checkpoint, "source PPO checkpoint")->required();
  auto* oracle = app.add_subcommand("oracle-check", "allocator vs. grid-search oracle");
  common(oracle, false);
  auto* plot = app.add_subcommand("plot", "render curve CSVs");
  plot->add_option("csv", csvs, "curve CSV files")->required();
  plot->add_option("--out", plot_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    CommandResult result;
    if (plot->parsed()) {
      std::vector<fs::path> paths(csvs.begin(), csvs.end());
      result = cmd_plot(paths, plot_out);
    } else {
      ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
      if (seed) c.seeds = {*seed};
      if (out_dir) c.out_dir = *out_dir;
      if (category) {
        c.category = sim::parse_category(*category);
        c.meta.task_category = c.category;
      }
      if (epochs) c.epochs = *epochs;
      c.validate();
      if (scratch->parsed()) {
        result = cmd_train_scratch(c);
      } else if (meta_train->parsed()) {
        result = cmd_meta_train(c);
      } else if (meta_adapt->parsed()) {
        result = cmd_meta_adapt(c, checkpoint);
      } else if (transfer->parsed()) {
        result = cmd_transfer(c, checkpoint);
      } else {
        result = cmd_oracle_check(c);
      }
    }
    std::cout << result.summary;
    for (const auto& f : result.files) std::cout << "wrote " << f.string() << '\n';
    return result.exit_code;
  } catch (const FileError& e) {
    std::cerr << "metacp: " << e.what() << '\n';
    return kFile;
  } catch (const sim::ConfigError& e) {
    std::cerr << "metacp: invalid config: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "metacp: " << e.what() << '\n';
    return kUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "metacp: " << e.what() << '\n';
    return kFile;
  } catch (const std::exception& e) {
    std::cerr << "metacp: error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace metacp::exp
