#include "metacp/simenv/env.hpp"

#include <cstdlib>
#include <random>
#include <stdexcept>

namespace metacp::sim {

namespace {

template <class Generator>
int sample_index(const Distribution& probs, Generator& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(gen);
  double acc = 0.0;
  for (int i = 0; i < kNumWorkloadStates - 1; ++i) {
    acc += probs[i];
    if (x < acc) return i;
  }
  return kNumWorkloadStates - 1;
}

int draw_hdv_requests(const PhysicalParams& p, Rng& rng) {
  if (p.n_hdv == 0) return 0;
  std::binomial_distribution<int> b(p.n_hdv, 0.5);
  return b(rng);
}

double bandwidth_for(int hdv_requests, const PhysicalParams& p) {
  return p.B_total - p.bw_per_hdv * hdv_requests;
}

// Reflects x into [lo, hi].
double reflect(double x, double lo, double hi) {
  if (hi <= lo) return lo;
  const double span = hi - lo;
  double y = std::fmod(x - lo, 2 * span);
  if (y < 0) y += 2 * span;
  return y <= span ? lo + y : hi - (y - span);
}

}  // namespace

int switch_count(std::span<const std::uint8_t> prev,
                 std::span<const std::uint8_t> modes) {
  int c = 0;
  for (std::size_t k = 0; k < modes.size(); ++k) c += prev[k] != modes[k];
  return c;
}

EnvState reset(const TaskSpec& task, std::uint64_t seed) {
  const PhysicalParams& p = task.params;
  Rng rng = make_rng(seed, Stream::EnvDynamics, 0);
  EnvState s;
  s.workloads.reserve(p.K);
  for (const auto& chain : task.workload_chains) {
    s.workloads.push_back(kMinWorkload +
                          sample_index(stationary_distribution(chain), rng));
  }
  std::uniform_real_distribution<double> d(p.d_min, p.d_max);
  for (int k = 0; k < p.K; ++k) s.distances.push_back(d(rng));
  s.prev_modes.assign(p.K, 0);
  s.hdv_requests = draw_hdv_requests(p, rng);
  s.bandwidth = bandwidth_for(s.hdv_requests, p);
  return s;
}

StepOutcome step(const EnvState& state, const Action& action,
                 const TaskSpec& task, Rng& rng) {
  const PhysicalParams& p = task.params;
  if (action.modes.size() != state.num_pairs() ||
      state.num_pairs() != static_cast<std::size_t>(p.K)) {
    throw std::invalid_argument("action/state dimension does not match K");
  }

  StepOutcome out;
  const auto coop = alloc::coop_set_of(action.modes);
  out.allocation = alloc::solve_p1(coop, state, p);
  out.switch_count = switch_count(state.prev_modes, action.modes);
  out.feasible = out.allocation.feasible;
  if (out.feasible) {
    out.gain = out.allocation.total_gain;
    out.reward = out.gain - p.omega * out.switch_count;
  } else {
    out.gain = 0.0;
    out.reward = p.penalty;
  }

  EnvState next;
  next.workloads.resize(p.K);
  for (int k = 0; k < p.K; ++k) {
    const auto& row =
        task.workload_chains[k][state.workloads[k] - kMinWorkload];
    next.workloads[k] = kMinWorkload + sample_index(row, rng);
  }
  next.hdv_requests = draw_hdv_requests(p, rng);
  next.bandwidth = bandwidth_for(next.hdv_requests, p);
  next.distances.resize(p.K);
  std::uniform_real_distribution<double> walk(-p.walk_step, p.walk_step);
  for (int k = 0; k < p.K; ++k) {
    next.distances[k] = reflect(state.distances[k] + walk(rng), p.d_min, p.d_max);
  }
  next.prev_modes = action.modes;
  out.next_state = std::move(next);
  return out;
}

Environment::Environment(std::shared_ptr<const TaskSpec> task,
                         std::uint64_t seed)
    : task_(std::move(task)), seed_(seed) {
  task_->validate();
  reset();
}

const EnvState& Environment::reset() {
  state_ = sim::reset(*task_, seed_);
  rng_ = make_rng(seed_, Stream::EnvDynamics, 1);
  return state_;
}

StepOutcome Environment::step(const Action& action) {
  StepOutcome out = sim::step(state_, action, *task_, rng_);
  state_ = out.next_state;
  return out;
}

}  // namespace metacp::sim
