#include "metacp/expcli/experiments.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "metacp/allocator.hpp"
#include "metacp/expcli/io.hpp"

namespace metacp::exp {

void ExperimentConfig::validate() const {
  if (epochs < 1) throw sim::ConfigError("epochs must be >= 1");
  if (seeds.empty()) throw sim::ConfigError("at least one seed is required");
  physical.validate();
  try {
    ppo.validate();
    meta.validate();
  } catch (const std::invalid_argument& e) {
    throw sim::ConfigError(e.what());
  }
  if (!(oracle_grid_step >= 1e-4)) throw sim::ConfigError("oracle_grid_step >= 1e-4");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  const auto& p = c.ppo;
  const auto& m = c.meta;
  j = nlohmann::json{
      {"scenario", c.scenario},
      {"category", std::string(sim::to_string(c.category))},
      {"seeds", c.seeds},
      {"epochs", c.epochs},
      {"steps_per_epoch", p.steps_per_epoch},
      {"out_dir", c.out_dir.string()},
      {"oracle_instances", c.oracle_instances},
      {"oracle_grid_step", c.oracle_grid_step},
      {"record_wall_time", c.record_wall_time},
      {"physical", c.physical},
      {"sampler", c.sampler},
      {"ppo",
       {{"clip_eps", p.clip_eps},
        {"lr_actor", p.lr_actor},
        {"lr_critic", p.lr_critic},
        {"gae_lambda", p.gae_lambda},
        {"update_epochs", p.update_epochs},
        {"minibatch_size", p.minibatch_size},
        {"sampling_refresh", p.sampling_refresh}}},
      {"meta",
       {{"task_batch_size", m.task_batch_size},
        {"inner_lr", m.inner_lr},
        {"meta_lr", m.meta_lr},
        {"inner_steps", m.inner_steps},
        {"meta_iterations", m.meta_iterations},
        {"convergence_window", m.convergence_window},
        {"tolerance", m.tolerance},
        {"max_grad_norm", m.max_grad_norm}}},
  };
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  auto get = [](const nlohmann::json& obj, const char* key, auto& field) {
    if (obj.contains(key)) obj.at(key).get_to(field);
  };
  get(j, "scenario", c.scenario);
  if (j.contains("category")) {
    c.category = sim::parse_category(j.at("category").get<std::string>());
  }
  get(j, "seeds", c.seeds);
  get(j, "epochs", c.epochs);
  get(j, "steps_per_epoch", c.ppo.steps_per_epoch);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  get(j, "oracle_instances", c.oracle_instances);
  get(j, "oracle_grid_step", c.oracle_grid_step);
  get(j, "record_wall_time", c.record_wall_time);
  if (j.contains("physical")) j.at("physical").get_to(c.physical);
  if (j.contains("sampler")) j.at("sampler").get_to(c.sampler);
  if (j.contains("ppo")) {
    const auto& p = j.at("ppo");
    get(p, "clip_eps", c.ppo.clip_eps);
    get(p, "lr_actor", c.ppo.lr_actor);
    get(p, "lr_critic", c.ppo.lr_critic);
    get(p, "gae_lambda", c.ppo.gae_lambda);
    get(p, "update_epochs", c.ppo.update_epochs);
    get(p, "minibatch_size", c.ppo.minibatch_size);
    get(p, "sampling_refresh", c.ppo.sampling_refresh);
  }
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    get(m, "task_batch_size", c.meta.task_batch_size);
    get(m, "inner_lr", c.meta.inner_lr);
    get(m, "meta_lr", c.meta.meta_lr);
    get(m, "inner_steps", c.meta.inner_steps);
    get(m, "meta_iterations", c.meta.meta_iterations);
    get(m, "convergence_window", c.meta.convergence_window);
    get(m, "tolerance", c.meta.tolerance);
    get(m, "max_grad_norm", c.meta.max_grad_norm);
  }
  c.meta.task_category = c.category;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FileError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw sim::ConfigError("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c;
  try {
    j.get_to(c);
  } catch (const nlohmann::json::exception& e) {
    throw sim::ConfigError("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

std::string dump_config(const ExperimentConfig& c) {
  return nlohmann::json(c).dump(2) + "\n";
}

std::uint64_t eval_task_seed(std::uint64_t seed) {
  return derive_seed(seed, Stream::TaskSampling, 0xE7A1);
}

sim::TaskSpec eval_task(const ExperimentConfig& c, sim::Category category,
                        std::uint64_t seed) {
  return sim::sample_task(category, eval_task_seed(seed), c.physical, c.sampler);
}

TrainingRun train_on_task(const ExperimentConfig& c, const sim::TaskSpec& task,
                          const ppo::PolicyModel& init, std::uint64_t seed,
                          std::string label, bool learn) {
  ppo::PpoConfig cfg = c.ppo;
  cfg.gamma = c.physical.gamma;
  if (!learn) {
    cfg.lr_actor = 0.0;
    cfg.lr_critic = 0.0;
  }
  auto adapted = meta::meta_adapt(init, task, c.epochs, cfg, seed);
  TrainingRun run;
  run.task = task;
  run.model = std::move(adapted.model);
  run.stats = std::move(adapted.curve);
  if (!c.record_wall_time) {
    for (auto& s : run.stats) s.wall_ms = 0.0;
  }
  std::vector<double> raw;
  raw.reserve(run.stats.size());
  for (const auto& s : run.stats) raw.push_back(s.mean_reward);
  run.curve = RewardCurve::from_raw(std::move(label), seed, std::move(raw));
  return run;
}

TrainingRun run_scratch(const ExperimentConfig& c, sim::Category category,
                        std::uint64_t seed) {
  const auto init = ppo::PolicyModel::init(static_cast<std::size_t>(c.physical.K),
                                           derive_seed(seed, Stream::Init));
  return train_on_task(c, eval_task(c, category, seed), init, seed,
                       "scratch:" + std::string(sim::to_string(category)));
}

meta::MetaState run_meta_train(const ExperimentConfig& c, sim::Category category,
                               std::uint64_t seed) {
  meta::MetaConfig mc = c.meta;
  mc.task_category = category;
  ppo::PpoConfig cfg = c.ppo;
  cfg.gamma = c.physical.gamma;
  auto tasks = meta::category_tasks(
      category, derive_seed(seed, Stream::TaskSampling, 0x3E7A), c.physical,
      c.sampler);
  return meta::meta_train(mc, cfg, tasks, static_cast<std::size_t>(c.physical.K),
                          seed);
}

TrainingRun run_meta_adapt(const ExperimentConfig& c,
                           const ppo::PolicyModel& meta_model,
                           sim::Category source, sim::Category target,
                           std::uint64_t seed) {
  return train_on_task(c, eval_task(c, target, seed), meta_model, seed,
                       std::string(sim::to_string(source)) + "->" +
                           std::string(sim::to_string(target)));
}

TrainingRun run_transfer(const ExperimentConfig& c,
                         const ppo::PolicyModel& source_model,
                         sim::Category target, std::uint64_t seed) {
  return train_on_task(c, eval_task(c, target, seed), source_model, seed,
                       "transfer->" + std::string(sim::to_string(target)));
}

OracleReport oracle_check(const sim::PhysicalParams& params,
                          std::size_t instances, double grid_step,
                          std::uint64_t seed) {
  params.validate();
  if (params.K > 3) throw sim::ConfigError("oracle-check requires K <= 3");
  Rng rng = make_rng(seed, Stream::EnvDynamics, 0x0AC1E);
  std::uniform_int_distribution<int> workload(sim::kMinWorkload, sim::kMaxWorkload);
  std::uniform_real_distribution<double> distance(params.d_min, params.d_max);
  std::binomial_distribution<int> hdv(params.n_hdv, 0.5);
  std::bernoulli_distribution coin(0.5);

  OracleReport report;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    sim::EnvState s;
    for (int k = 0; k < params.K; ++k) {
      s.workloads.push_back(workload(rng));
      s.distances.push_back(distance(rng));
    }
    s.prev_modes.assign(params.K, 0);
    s.hdv_requests = params.n_hdv > 0 ? hdv(rng) : 0;
    s.bandwidth = params.B_total - params.bw_per_hdv * s.hdv_requests;
    std::vector<std::uint8_t> modes(params.K);
    for (auto& m : modes) m = coin(rng) ? 1 : 0;
    const auto coop = alloc::coop_set_of(modes);

    const auto solved = alloc::solve_p1(coop, s, params);
    const auto oracle = alloc::oracle_p1(coop, s, params, grid_step);
    OracleRow row;
    row.instance = i;
    row.pairs = coop.size();
    row.solver_feasible = solved.feasible;
    row.oracle_feasible = oracle.feasible;
    row.solver_gain = solved.total_gain;
    row.oracle_gain = oracle.total_gain;
    if (solved.feasible && oracle.feasible) {
      const double denom = std::max(std::abs(oracle.total_gain), 1e-12);
      row.relative_gap = std::max(0.0, oracle.total_gain - solved.total_gain) / denom;
    }
    if (solved.feasible == oracle.feasible) ++agree;
    report.max_relative_gap = std::max(report.max_relative_gap, row.relative_gap);
    report.rows.push_back(row);
  }
  report.agreement_rate =
      instances == 0 ? 1.0 : static_cast<double>(agree) / static_cast<double>(instances);
  return report;
}

}  // namespace metacp::exp
