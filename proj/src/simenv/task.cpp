#include "metacp/simenv/task.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "metacp/rng.hpp"

namespace metacp::sim {

namespace {

template <class Generator>
Distribution sample_dirichlet(const Distribution& alpha, Generator& gen) {
  Distribution out{};
  double total = 0.0;
  for (int i = 0; i < kNumWorkloadStates; ++i) {
    std::gamma_distribution<double> g(alpha[i], 1.0);
    out[i] = g(gen);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

Distribution sample_row(const Distribution& target,
                        const TaskSamplerConfig& cfg, Rng& rng) {
  if (std::isinf(cfg.concentration)) return target;
  Distribution ones;
  ones.fill(1.0);
  const Distribution u = sample_dirichlet(ones, rng);
  Distribution alpha{};
  for (int i = 0; i < kNumWorkloadStates; ++i) {
    alpha[i] = cfg.concentration * target[i] + cfg.jitter * u[i];
  }
  return sample_dirichlet(alpha, rng);
}

}  // namespace

double l1_distance(const Distribution& a, const Distribution& b) {
  double d = 0.0;
  for (int i = 0; i < kNumWorkloadStates; ++i) d += std::abs(a[i] - b[i]);
  return d;
}

Distribution stationary_distribution(const TransitionMatrix& m, double tol,
                                     int max_iterations) {
  Distribution pi;
  pi.fill(1.0 / kNumWorkloadStates);
  for (int it = 0; it < max_iterations; ++it) {
    Distribution next{};
    for (int i = 0; i < kNumWorkloadStates; ++i) {
      for (int j = 0; j < kNumWorkloadStates; ++j) next[j] += pi[i] * m[i][j];
    }
    double sum = 0.0;
    for (double v : next) sum += v;
    for (auto& v : next) v /= sum;
    const double change = l1_distance(next, pi);
    pi = next;
    if (change < tol) return pi;
  }
  throw NumericalError("stationary distribution did not converge");
}

void TaskSpec::validate() const {
  params.validate();
  if (workload_chains.size() != static_cast<std::size_t>(params.K)) {
    throw ConfigError("task needs one workload chain per CAV pair");
  }
  for (const auto& m : workload_chains) {
    for (const auto& row : m) {
      double sum = 0.0;
      for (double v : row) {
        if (!(v >= 0.0)) throw ConfigError("negative transition probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("transition matrix row does not sum to 1");
      }
    }
  }
}

TaskSpec sample_task(Category category, std::uint64_t seed,
                     const PhysicalParams& params,
                     const TaskSamplerConfig& sampler) {
  params.validate();
  const Distribution& target = steady_state_target(category);
  Rng rng = make_rng(seed, Stream::TaskSampling);

  TaskSpec task;
  task.params = params;
  task.category = category;
  char id[48];
  std::snprintf(id, sizeof(id), "%s-%016llx",
                std::string(to_string(category)).c_str(),
                static_cast<unsigned long long>(seed));
  task.task_id = id;

  for (int k = 0; k < params.K; ++k) {
    bool accepted = false;
    for (int attempt = 0; attempt < sampler.max_resamples && !accepted;
         ++attempt) {
      TransitionMatrix m{};
      for (auto& row : m) row = sample_row(target, sampler, rng);
      if (l1_distance(stationary_distribution(m), target) <= sampler.max_l1) {
        task.workload_chains.push_back(m);
        accepted = true;
      }
    }
    if (!accepted) {
      throw ConfigError("could not sample a workload chain near the " +
                        std::string(to_string(category)) +
                        " steady-state target");
    }
  }
  return task;
}

// ---------------------------------------------------------------------------
// JSON schema

void to_json(nlohmann::json& j, const PhysicalParams& p) {
  j = nlohmann::json{
      {"K", p.K},
      {"delta", p.delta},
      {"delta_tilde", p.delta_tilde},
      {"delta_hat", p.delta_hat},
      {"kappa", p.kappa},
      {"Delta", p.Delta},
      {"w_feat", p.w_feat},
      {"f_max", p.f_max},
      {"B_total", p.B_total},
      {"bw_per_hdv", p.bw_per_hdv},
      {"n_hdv", p.n_hdv},
      {"p_tx", p.p_tx},
      {"noise", p.noise},
      {"g_ref", p.g_ref},
      {"path_exp", p.path_exp},
      {"d_min", p.d_min},
      {"d_max", p.d_max},
      {"walk_step", p.walk_step},
      {"omega", p.omega},
      {"penalty", p.penalty},
      {"gamma", p.gamma},
  };
}

// Missing keys keep their defaults so partial override files work.
void from_json(const nlohmann::json& j, PhysicalParams& p) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("K", p.K);
  get("delta", p.delta);
  get("delta_tilde", p.delta_tilde);
  get("delta_hat", p.delta_hat);
  get("kappa", p.kappa);
  get("Delta", p.Delta);
  get("w_feat", p.w_feat);
  get("f_max", p.f_max);
  get("B_total", p.B_total);
  get("bw_per_hdv", p.bw_per_hdv);
  get("n_hdv", p.n_hdv);
  get("p_tx", p.p_tx);
  get("noise", p.noise);
  get("g_ref", p.g_ref);
  get("path_exp", p.path_exp);
  get("d_min", p.d_min);
  get("d_max", p.d_max);
  get("walk_step", p.walk_step);
  get("omega", p.omega);
  get("penalty", p.penalty);
  get("gamma", p.gamma);
}

void to_json(nlohmann::json& j, const TaskSamplerConfig& c) {
  j = nlohmann::json{{"jitter", c.jitter},
                     {"max_l1", c.max_l1},
                     {"max_resamples", c.max_resamples}};
  // JSON has no infinity; "inf" marks the exact-row sampler.
  if (std::isinf(c.concentration)) {
    j["concentration"] = "inf";
  } else {
    j["concentration"] = c.concentration;
  }
}

void from_json(const nlohmann::json& j, TaskSamplerConfig& c) {
  if (j.contains("concentration")) {
    const auto& v = j.at("concentration");
    if (v.is_string()) {
      if (v.get<std::string>() != "inf") {
        throw ConfigError("concentration must be a number or \"inf\"");
      }
      c.concentration = std::numeric_limits<double>::infinity();
    } else {
      v.get_to(c.concentration);
    }
  }
  if (j.contains("jitter")) j.at("jitter").get_to(c.jitter);
  if (j.contains("max_l1")) j.at("max_l1").get_to(c.max_l1);
  if (j.contains("max_resamples")) j.at("max_resamples").get_to(c.max_resamples);
}

void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = nlohmann::json{{"task_id", t.task_id},
                     {"category", std::string(to_string(t.category))},
                     {"params", t.params},
                     {"workload_chains", t.workload_chains}};
}

void from_json(const nlohmann::json& j, TaskSpec& t) {
  j.at("task_id").get_to(t.task_id);
  t.category = parse_category(j.at("category").get<std::string>());
  t.params = PhysicalParams{};
  if (j.contains("params")) j.at("params").get_to(t.params);
  j.at("workload_chains").get_to(t.workload_chains);
  t.validate();
}

}  // namespace metacp::sim
