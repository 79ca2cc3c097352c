#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace metacp::sim {

inline constexpr int kNumWorkloadStates = 5;
inline constexpr int kMinWorkload = 4;
inline constexpr int kMaxWorkload = kMinWorkload + kNumWorkloadStates - 1;

using Distribution = std::array<double, kNumWorkloadStates>;

enum class Category { Low, Medium, High, General };

std::string_view to_string(Category c);
Category parse_category(std::string_view name);

// Average steady-state workload probabilities over states {4,...,8}.
const Distribution& steady_state_target(Category c);

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Physical constants of one local vehicular network. Frequencies in Hz,
// energy in J, bandwidth in Hz, time in s, distances in m.
struct PhysicalParams {
  int K = 3;
  double delta = 2e7;          // cycles/object, default DNN
  double delta_tilde = 3e7;    // cycles/object, fusion DNN
  double delta_hat = 1.5e7;    // cycles/object, receiver-side post fusion
  double kappa = 1e-28;
  double Delta = 0.1;          // delay bound
  double w_feat = 1.6e5;       // feature bits per shared object
  double f_max = 2e9;
  double B_total = 10.5e6;
  double bw_per_hdv = 0.5e6;
  int n_hdv = 10;
  double p_tx = 0.2;
  double noise = 1e-13;
  double g_ref = 1e-6;
  double path_exp = 2.0;
  double d_min = 10.0;
  double d_max = 60.0;
  double walk_step = 2.0;      // distance walk increment ~ U(-walk_step, walk_step)
  double omega = 0.001;        // switching-cost weight
  double penalty = -0.1;       // reward when the allocation subproblem is infeasible
  double gamma = 0.99;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const PhysicalParams&) const = default;
};

// g_ref * d^(-path_exp)
double channel_gain(double distance, const PhysicalParams& p);

}  // namespace metacp::sim
