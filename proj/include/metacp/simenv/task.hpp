#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "metacp/simenv/params.hpp"

namespace metacp::sim {

using TransitionMatrix =
    std::array<std::array<double, kNumWorkloadStates>, kNumWorkloadStates>;

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One MDP task: the physical constants plus one workload chain per CAV pair.
struct TaskSpec {
  PhysicalParams params;
  std::vector<TransitionMatrix> workload_chains;  // size K
  Category category = Category::General;
  std::string task_id;

  // Row-stochasticity and size checks; throws ConfigError.
  void validate() const;

  bool operator==(const TaskSpec&) const = default;
};

// Row i of every chain is drawn from
//   Dirichlet(concentration * target + jitter * u_i),  u_i ~ Dirichlet(1).
// A chain is accepted when its stationary distribution lies within
// `max_l1` of the category target. An infinite concentration collapses every
// Dirichlet onto its mean.
struct TaskSamplerConfig {
  double concentration = 50.0;
  double jitter = 0.1;
  double max_l1 = 0.15;
  int max_resamples = 100;

  static TaskSamplerConfig exact() {
    return {std::numeric_limits<double>::infinity(), 0.0, 0.15, 100};
  }

  bool operator==(const TaskSamplerConfig&) const = default;
};

// Power iteration from the uniform vector until the L1 change drops below
// `tol`; throws NumericalError after `max_iterations`.
Distribution stationary_distribution(const TransitionMatrix& m,
                                     double tol = 1e-12,
                                     int max_iterations = 1'000'000);

double l1_distance(const Distribution& a, const Distribution& b);

TaskSpec sample_task(Category category, std::uint64_t seed,
                     const PhysicalParams& params = {},
                     const TaskSamplerConfig& sampler = {});

void to_json(nlohmann::json& j, const PhysicalParams& p);
void from_json(const nlohmann::json& j, PhysicalParams& p);
void to_json(nlohmann::json& j, const TaskSamplerConfig& c);
void from_json(const nlohmann::json& j, TaskSamplerConfig& c);
void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);

}  // namespace metacp::sim
