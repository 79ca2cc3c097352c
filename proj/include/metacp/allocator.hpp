#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "metacp/simenv/params.hpp"
#include "metacp/simenv/state.hpp"

// Joint bandwidth-fraction / CPU-frequency allocation for the set of
// cooperative pairs in one slot.
namespace metacp::alloc {

struct AllocationResult {
  std::vector<double> betas;  // bandwidth fraction per pair (0 for SP pairs)
  std::vector<double> freqs;  // CPU frequency for the shared objects, Hz
  std::vector<double> gains;  // computing-energy reduction vs. SP, J
  double total_gain = 0.0;
  bool feasible = true;
};

// SP-mode frequency finishing W objects within the delay bound.
double default_freq(int workload, const sim::PhysicalParams& p);

// Frequency at which the cooperative gain drops to zero.
double peak_freq(int workload, const sim::PhysicalParams& p);

// Cooperative gain at frequency f: kappa W (2 delta fD^2 - delta~ f^2).
double gain(int workload, double freq, const sim::PhysicalParams& p);

// log2(1 + p g / sigma^2)
double spectral_efficiency(double channel_gain, const sim::PhysicalParams& p);

// Frequency forced by the active delay constraint at bandwidth fraction
// `beta`. Empty when the transmission alone exhausts the per-object budget.
std::optional<double> freq_from_beta(int workload, double beta,
                                     double bandwidth, double channel_gain,
                                     const sim::PhysicalParams& p);

// Smallest fraction keeping the forced frequency at or below
// min(peak_freq, f_max). Empty when that fraction exceeds 1.
std::optional<double> min_beta(int workload, double bandwidth,
                               double channel_gain,
                               const sim::PhysicalParams& p);

// Maximizes the total gain of `coop_set` (pair indices) by projected
// gradient ascent over {beta_k >= beta_k^min, sum beta <= 1}.
AllocationResult solve_p1(std::span<const std::size_t> coop_set,
                          const sim::EnvState& state,
                          const sim::PhysicalParams& p);

// Exhaustive grid search used as a verification oracle. Per-pair feasibility
// thresholds come from bisection on freq_from_beta, not from min_beta.
// Refuses (std::invalid_argument) more than 3 pairs or grid_step < 1e-4.
AllocationResult oracle_p1(std::span<const std::size_t> coop_set,
                           const sim::EnvState& state,
                           const sim::PhysicalParams& p, double grid_step);

std::vector<std::size_t> coop_set_of(std::span<const std::uint8_t> modes);

}  // namespace metacp::alloc
