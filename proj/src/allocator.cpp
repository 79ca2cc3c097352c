#include "metacp/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace metacp::alloc {

using sim::PhysicalParams;

double default_freq(int workload, const PhysicalParams& p) {
  return p.delta * workload / p.Delta;
}

double peak_freq(int workload, const PhysicalParams& p) {
  return std::sqrt(2.0 * p.delta * p.delta * p.delta / p.delta_tilde) *
         workload / p.Delta;
}

double gain(int workload, double freq, const PhysicalParams& p) {
  const double fd = default_freq(workload, p);
  return p.kappa * workload * (2.0 * p.delta * fd * fd - p.delta_tilde * freq * freq);
}

double spectral_efficiency(double channel_gain, const PhysicalParams& p) {
  return std::log2(1.0 + p.p_tx * channel_gain / p.noise);
}

std::optional<double> freq_from_beta(int workload, double beta,
                                     double bandwidth, double channel_gain,
                                     const PhysicalParams& p) {
  const double rate = beta * bandwidth * spectral_efficiency(channel_gain, p);
  if (!(rate > 0.0)) return std::nullopt;
  const double budget = p.Delta / workload - p.w_feat / rate;
  if (budget <= 0.0) return std::nullopt;
  return p.delta_hat / budget;
}

std::optional<double> min_beta(int workload, double bandwidth,
                               double channel_gain, const PhysicalParams& p) {
  const double cap = std::min(peak_freq(workload, p), p.f_max);
  const double bracket = p.Delta / workload - p.delta_hat / cap;
  if (bracket <= 0.0) return std::nullopt;
  const double beta =
      p.w_feat / (bracket * bandwidth * spectral_efficiency(channel_gain, p));
  if (!(beta <= 1.0)) return std::nullopt;
  return beta;
}

std::vector<std::size_t> coop_set_of(std::span<const std::uint8_t> modes) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    if (modes[k]) out.push_back(k);
  }
  return out;
}

namespace {

// Per-pair constants for one slot. With a = Delta/W and b = w/(B L) the
// active delay constraint gives f(beta) = delta^ / (a - b/beta).
struct PairTerms {
  int workload;
  double a;
  double b;
  double cap;  // min(f^P, f_max)
};

class Problem {
 public:
  Problem(std::span<const std::size_t> coop, const sim::EnvState& s,
          const PhysicalParams& p)
      : p_(p) {
    for (std::size_t k : coop) {
      if (k >= s.num_pairs()) throw std::out_of_range("pair index out of range");
      const double eff =
          spectral_efficiency(sim::channel_gain(s.distances[k], p), p);
      const int w = s.workloads[k];
      terms_.push_back({w, p.Delta / w, p.w_feat / (s.bandwidth * eff),
                        std::min(peak_freq(w, p), p.f_max)});
    }
  }

  std::size_t size() const { return terms_.size(); }
  const PairTerms& term(std::size_t i) const { return terms_[i]; }

  // Forced frequency, or +inf when the budget is exhausted.
  double freq(std::size_t i, double beta) const {
    const auto& t = terms_[i];
    const double budget = t.a - t.b / beta;
    if (!(beta > 0.0) || budget <= 0.0) {
      return std::numeric_limits<double>::infinity();
    }
    return p_.delta_hat / budget;
  }

  double pair_gain(std::size_t i, double beta) const {
    return gain(terms_[i].workload, freq(i, beta), p_);
  }

  double objective(std::span<const double> betas) const {
    double total = 0.0;
    for (std::size_t i = 0; i < size(); ++i) total += pair_gain(i, betas[i]);
    return total;
  }

  // dG/dbeta = 2 kappa W delta~ f^3 b / (delta^ beta^2)
  double derivative(std::size_t i, double beta) const {
    const auto& t = terms_[i];
    const double f = freq(i, beta);
    return 2.0 * p_.kappa * t.workload * p_.delta_tilde * f * f * f * t.b /
           (p_.delta_hat * beta * beta);
  }

  bool pair_feasible(std::size_t i, double beta) const {
    return freq(i, beta) <= terms_[i].cap;
  }

  const PhysicalParams& params() const { return p_; }

 private:
  const PhysicalParams& p_;
  std::vector<PairTerms> terms_;
};

AllocationResult sp_defaults(const sim::EnvState& s, const PhysicalParams& p) {
  AllocationResult r;
  const std::size_t k = s.num_pairs();
  r.betas.assign(k, 0.0);
  r.gains.assign(k, 0.0);
  r.freqs.resize(k);
  for (std::size_t i = 0; i < k; ++i) r.freqs[i] = default_freq(s.workloads[i], p);
  return r;
}

void write_solution(AllocationResult& r, const Problem& prob,
                    std::span<const std::size_t> coop,
                    std::span<const double> betas) {
  r.total_gain = 0.0;
  for (std::size_t i = 0; i < coop.size(); ++i) {
    const std::size_t k = coop[i];
    r.betas[k] = betas[i];
    r.freqs[k] = prob.freq(i, betas[i]);
    r.gains[k] = prob.pair_gain(i, betas[i]);
    r.total_gain += r.gains[k];
  }
}

// Euclidean projection of y onto {y >= 0, sum y <= budget}.
void project_capped_simplex(std::vector<double>& y, double budget) {
  for (auto& v : y) v = std::max(v, 0.0);
  double sum = std::accumulate(y.begin(), y.end(), 0.0);
  if (sum <= budget) return;
  std::vector<double> sorted = y;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double shift = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - budget) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) shift = candidate;
  }
  for (auto& v : y) v = std::max(v - shift, 0.0);
}

}  // namespace

AllocationResult solve_p1(std::span<const std::size_t> coop_set,
                          const sim::EnvState& state,
                          const PhysicalParams& p) {
  AllocationResult result = sp_defaults(state, p);
  if (coop_set.empty()) return result;

  const Problem prob(coop_set, state, p);
  const std::size_t n = prob.size();

  std::vector<double> lower(n);
  double lower_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = coop_set[i];
    const auto b = min_beta(state.workloads[k], state.bandwidth,
                            sim::channel_gain(state.distances[k], p), p);
    if (!b) {
      result.feasible = false;
      return result;
    }
    lower[i] = *b;
    lower_sum += *b;
  }
  if (lower_sum > 1.0) {
    result.feasible = false;
    return result;
  }
  const double slack = 1.0 - lower_sum;

  std::vector<double> beta(n);
  for (std::size_t i = 0; i < n; ++i) beta[i] = lower[i] + slack / n;

  auto gradient = [&](std::span<const double> b) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = prob.derivative(i, b[i]);
    return g;
  };

  std::vector<double> g = gradient(beta);
  double g_scale = 0.0;
  for (double v : g) g_scale = std::max(g_scale, std::abs(v));
  if (!(g_scale > 0.0) || slack == 0.0) {
    // Flat ascent direction: hand out the slack in proportion to workload.
    double w_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) w_total += prob.term(i).workload;
    for (std::size_t i = 0; i < n; ++i) {
      beta[i] = lower[i] + slack * prob.term(i).workload / w_total;
    }
    write_solution(result, prob, coop_set, beta);
    return result;
  }

  double objective = prob.objective(beta);
  double step = 0.1;
  std::vector<double> candidate(n);
  std::vector<double> shifted(n);
  for (int iter = 0; iter < 10000; ++iter) {
    g_scale = 0.0;
    for (double v : g) g_scale = std::max(g_scale, std::abs(v));
    if (!(g_scale > 0.0)) break;
    for (std::size_t i = 0; i < n; ++i) {
      shifted[i] = beta[i] - lower[i] + step * g[i] / g_scale;
    }
    project_capped_simplex(shifted, slack);
    for (std::size_t i = 0; i < n; ++i) candidate[i] = lower[i] + shifted[i];
    const double next = prob.objective(candidate);
    if (next > objective) {
      const double improvement = next - objective;
      beta = candidate;
      objective = next;
      g = gradient(beta);
      if (improvement < 1e-10 * std::abs(objective)) break;
      step = std::min(step * 2.0, 10.0);
    } else {
      step *= 0.5;
      if (step < 1e-15) break;
    }
  }

  write_solution(result, prob, coop_set, beta);
  return result;
}

AllocationResult oracle_p1(std::span<const std::size_t> coop_set,
                           const sim::EnvState& state,
                           const PhysicalParams& p, double grid_step) {
  if (coop_set.size() > 3) {
    throw std::invalid_argument("oracle_p1 supports at most 3 cooperative pairs");
  }
  if (!(grid_step >= 1e-4)) {
    throw std::invalid_argument("oracle_p1 grid_step must be >= 1e-4");
  }
  AllocationResult result = sp_defaults(state, p);
  if (coop_set.empty()) return result;

  const Problem prob(coop_set, state, p);
  const std::size_t n = prob.size();

  // Per-pair feasibility threshold by bisection on the forced frequency.
  std::vector<double> threshold(n);
  double threshold_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!prob.pair_feasible(i, 1.0)) {
      result.feasible = false;
      return result;
    }
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (prob.pair_feasible(i, mid)) hi = mid; else lo = mid;
    }
    threshold[i] = hi;
    threshold_sum += hi;
  }
  if (threshold_sum > 1.0) {
    result.feasible = false;
    return result;
  }
  const double slack = 1.0 - threshold_sum;

  std::vector<double> best(n);
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> beta(n);
  auto consider = [&](std::span<const double> fractions) {
    for (std::size_t i = 0; i < n; ++i) beta[i] = threshold[i] + slack * fractions[i];
    const double v = prob.objective(beta);
    if (v > best_value) {
      best_value = v;
      best = beta;
    }
  };

  // Enumerate fraction vectors q on a grid with sum(q) == 1 (slice) or, on a
  // coarser grid, sum(q) < 1 (interior).
  auto enumerate = [&](double h, bool slice) {
    const long steps = std::lround(1.0 / h);
    std::vector<double> q(n, 0.0);
    if (n == 1) {
      if (slice) {
        q[0] = 1.0;
        consider(q);
      } else {
        for (long i = 0; i < steps; ++i) {
          q[0] = i * h;
          consider(q);
        }
      }
      return;
    }
    if (n == 2) {
      for (long i = 0; i <= steps; ++i) {
        q[0] = static_cast<double>(i) / steps;
        if (slice) {
          q[1] = 1.0 - q[0];
          consider(q);
        } else {
          for (long j = 0; i + j < steps; ++j) {
            q[1] = static_cast<double>(j) / steps;
            consider(q);
          }
        }
      }
      return;
    }
    for (long i = 0; i <= steps; ++i) {
      q[0] = static_cast<double>(i) / steps;
      for (long j = 0; i + j <= steps; ++j) {
        q[1] = static_cast<double>(j) / steps;
        if (slice) {
          q[2] = std::max(0.0, 1.0 - q[0] - q[1]);
          consider(q);
        } else {
          for (long l = 0; i + j + l < steps; ++l) {
            q[2] = static_cast<double>(l) / steps;
            consider(q);
          }
        }
      }
    }
  };
  enumerate(grid_step, true);
  enumerate(std::max(grid_step * 10.0, 0.02), false);

  write_solution(result, prob, coop_set, best);
  return result;
}

}  // namespace metacp::alloc
