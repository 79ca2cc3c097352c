#include "metacp/expcli/curve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metacp::exp {

RewardCurve RewardCurve::from_raw(std::string label, std::uint64_t seed,
                                  std::vector<double> raw, std::size_t window) {
  RewardCurve c;
  c.label = std::move(label);
  c.seed = seed;
  c.smoothed = moving_average(raw, window);
  c.raw = std::move(raw);
  return c;
}

std::vector<double> moving_average(std::span<const double> x,
                                   std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: window 0");
  std::vector<double> out(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i];
    if (i >= window) acc -= x[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

double final_mean(std::span<const double> x, std::size_t window) {
  if (x.empty()) throw std::invalid_argument("final_mean: empty series");
  const std::size_t n = std::min(window, x.size());
  const auto tail = x.subspan(x.size() - n);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(n);
}

std::size_t epochs_to_fraction(const RewardCurve& curve, double fraction,
                               std::size_t final_window) {
  const double target = final_mean(curve.raw, final_window);
  const double threshold = target - (1.0 - fraction) * std::abs(target);
  for (std::size_t i = 0; i < curve.smoothed.size(); ++i) {
    if (curve.smoothed[i] >= threshold) return i;
  }
  return curve.smoothed.size();
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace metacp::exp
