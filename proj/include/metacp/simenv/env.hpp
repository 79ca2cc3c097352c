#pragma once

#include <cstdint>
#include <memory>

#include "metacp/allocator.hpp"
#include "metacp/rng.hpp"
#include "metacp/simenv/state.hpp"
#include "metacp/simenv/task.hpp"

namespace metacp::sim {

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  double gain = 0.0;  // total optimal gain; 0 when infeasible
  int switch_count = 0;
  bool feasible = true;
  alloc::AllocationResult allocation;
};

int switch_count(std::span<const std::uint8_t> prev,
                 std::span<const std::uint8_t> modes);

// Initial state: workloads from each chain's stationary distribution,
// uniform distances, all pairs in SP mode, HDV requests ~ Binomial(n, 0.5).
EnvState reset(const TaskSpec& task, std::uint64_t seed);

// One slot: reward from the optimal allocation for the chosen cooperative
// set, then workload / HDV / distance transitions drawn from `rng`.
StepOutcome step(const EnvState& state, const Action& action,
                 const TaskSpec& task, Rng& rng);

// Stateful wrapper owning the current state and the dynamics stream.
class Environment {
 public:
  Environment(std::shared_ptr<const TaskSpec> task, std::uint64_t seed);

  const EnvState& reset();
  StepOutcome step(const Action& action);

  const EnvState& state() const { return state_; }
  const TaskSpec& task() const { return *task_; }
  std::shared_ptr<const TaskSpec> task_ptr() const { return task_; }

 private:
  std::shared_ptr<const TaskSpec> task_;
  std::uint64_t seed_;
  Rng rng_;
  EnvState state_;
};

}  // namespace metacp::sim
