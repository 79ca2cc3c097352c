#pragma once

#include <cstdint>
#include <vector>

namespace metacp::sim {

// Observation of the network at one slot.
struct EnvState {
  double bandwidth = 0.0;           // Hz available to CAVs
  int hdv_requests = 0;             // M(t); bandwidth = B_total - bw_per_hdv * M
  std::vector<int> workloads;       // shared objects per pair, in [4, 8]
  std::vector<double> distances;    // transmitter-receiver distance per pair
  std::vector<std::uint8_t> prev_modes;  // previous slot's modes (1 = CP)

  std::size_t num_pairs() const { return workloads.size(); }

  bool operator==(const EnvState&) const = default;
};

// Perception mode per pair: 1 = cooperative, 0 = stand-alone.
struct Action {
  std::vector<std::uint8_t> modes;

  bool operator==(const Action&) const = default;
};

}  // namespace metacp::sim
