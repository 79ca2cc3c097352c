#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "metacp/expcli/curve.hpp"
#include "metacp/meta.hpp"
#include "metacp/ppo.hpp"
#include "metacp/simenv/task.hpp"

namespace metacp::exp {

struct ExperimentConfig {
  std::string scenario = "default";
  sim::Category category = sim::Category::General;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t epochs = 500;
  sim::PhysicalParams physical;
  sim::TaskSamplerConfig sampler;
  ppo::PpoConfig ppo;  // ppo.steps_per_epoch is the per-epoch step count
  meta::MetaConfig meta;
  std::filesystem::path out_dir = "out";
  std::size_t oracle_instances = 200;
  double oracle_grid_step = 1e-3;
  bool record_wall_time = false;  // wall_ms column is 0 unless enabled

  // Throws sim::ConfigError.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Throws FileError when the file cannot be read, sim::ConfigError when its
// contents are invalid.
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& c);

// Task seeds. Evaluation tasks and meta-training tasks use disjoint
// substreams of the run seed.
std::uint64_t eval_task_seed(std::uint64_t seed);
sim::TaskSpec eval_task(const ExperimentConfig& c, sim::Category category,
                        std::uint64_t seed);

struct TrainingRun {
  sim::TaskSpec task;
  ppo::PolicyModel model;
  std::vector<ppo::EpochStats> stats;
  RewardCurve curve;
};

// PPO from `init` on `task` for c.epochs epochs. Learning is skipped when
// `learn` is false (evaluation-only curve).
TrainingRun train_on_task(const ExperimentConfig& c, const sim::TaskSpec& task,
                          const ppo::PolicyModel& init, std::uint64_t seed,
                          std::string label, bool learn = true);

TrainingRun run_scratch(const ExperimentConfig& c, sim::Category category,
                        std::uint64_t seed);

meta::MetaState run_meta_train(const ExperimentConfig& c, sim::Category category,
                               std::uint64_t seed);

TrainingRun run_meta_adapt(const ExperimentConfig& c,
                           const ppo::PolicyModel& meta_model,
                           sim::Category source, sim::Category target,
                           std::uint64_t seed);

TrainingRun run_transfer(const ExperimentConfig& c,
                         const ppo::PolicyModel& source_model,
                         sim::Category target, std::uint64_t seed);

struct OracleRow {
  std::size_t instance = 0;
  std::size_t pairs = 0;
  bool solver_feasible = false;
  bool oracle_feasible = false;
  double solver_gain = 0.0;
  double oracle_gain = 0.0;
  double relative_gap = 0.0;  // (oracle - solver) / |oracle|, clipped at 0
};

struct OracleReport {
  std::vector<OracleRow> rows;
  double max_relative_gap = 0.0;
  double agreement_rate = 1.0;
  bool passed() const { return max_relative_gap <= 1e-3 && agreement_rate >= 1.0; }
};

// Random states and cooperative sets with K <= 3.
OracleReport oracle_check(const sim::PhysicalParams& params,
                          std::size_t instances, double grid_step,
                          std::uint64_t seed);

}  // namespace metacp::exp
