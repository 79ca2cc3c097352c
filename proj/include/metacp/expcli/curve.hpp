#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace metacp::exp {

inline constexpr std::size_t kSmoothingWindow = 20;
inline constexpr std::size_t kFinalWindow = 50;

struct RewardCurve {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<double> raw;       // per-epoch mean reward
  std::vector<double> smoothed;  // trailing moving average

  static RewardCurve from_raw(std::string label, std::uint64_t seed,
                              std::vector<double> raw,
                              std::size_t window = kSmoothingWindow);
};

// Trailing moving average: out[i] = mean(x[max(0, i-window+1) .. i]).
std::vector<double> moving_average(std::span<const double> x,
                                   std::size_t window);

// Mean of the last `window` entries (all entries if shorter).
double final_mean(std::span<const double> x, std::size_t window = kFinalWindow);

// First epoch whose smoothed reward reaches `fraction` of the final-window
// mean of the raw curve. For a negative final mean the threshold is read as
// "within (1 - fraction) of |final| below it", which coincides with
// fraction * final for positive values.
std::size_t epochs_to_fraction(const RewardCurve& curve, double fraction = 0.9,
                               std::size_t final_window = kFinalWindow);

double median(std::vector<double> values);

}  // namespace metacp::exp
