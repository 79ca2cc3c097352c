#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "metacp/ppo.hpp"
#include "metacp/simenv/task.hpp"

// First-order meta-training of a PPO initialization over a task
// distribution, and adaptation of that initialization to a new task.
namespace metacp::meta {

struct MetaConfig {
  std::size_t task_batch_size = 4;
  double inner_lr = 1e-3;
  double meta_lr = 4e-2;
  std::size_t inner_steps = 1;
  std::size_t meta_iterations = 300;
  sim::Category task_category = sim::Category::General;
  // Early stop when the windowed mean adaptation loss moves by less than
  // `tolerance` (relative) between consecutive windows; 0 disables.
  std::size_t convergence_window = 20;
  double tolerance = 0.0;
  double max_grad_norm = 10.0;

  void validate() const;
  bool operator==(const MetaConfig&) const = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double mean_adaptation_loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct MetaState {
  ppo::PolicyModel meta_model;
  std::size_t iteration = 0;
  std::vector<IterationRecord> history;
};

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// `steps` plain gradient steps theta <- theta - lr * grad(theta).
std::vector<double> sgd_adapt(std::span<const double> theta,
                              const GradientFn& grad, double lr,
                              std::size_t steps);

// outer_grad evaluated at the adapted point; the Jacobian of the inner
// steps is dropped.
std::vector<double> first_order_meta_gradient(std::span<const double> theta,
                                              const GradientFn& inner_grad,
                                              const GradientFn& outer_grad,
                                              double lr, std::size_t steps);

struct InnerResult {
  ppo::PolicyModel adapted;
  ppo::Trajectory data;
  double loss_before = 0.0;  // unified loss at the meta weights on `data`
  double loss_after = 0.0;   // unified loss at the adapted weights on `data`
};

// Collects one epoch of transitions with the meta weights and takes
// `inner_steps` SGD steps on the unified loss over that fixed batch.
InnerResult inner_adapt(const ppo::PolicyModel& meta_model,
                        const sim::TaskSpec& task, double inner_lr,
                        std::size_t inner_steps, const ppo::PpoConfig& ppo,
                        std::uint64_t seed);

struct AdaptationGradient {
  std::vector<double> grad;
  double loss = 0.0;
  ppo::Trajectory data;
};

// Fresh transitions under the adapted weights; gradient of the unified loss
// at those weights.
AdaptationGradient adaptation_gradient(const ppo::PolicyModel& adapted,
                                       const sim::TaskSpec& task,
                                       const ppo::PpoConfig& ppo,
                                       std::uint64_t seed);

double l2_norm(std::span<const double> v);

// theta -= meta_lr * clip(mean(grads), max_norm). Returns the pre-clip norm
// of the mean gradient.
double meta_update(std::span<double> theta,
                   std::span<const std::vector<double>> task_grads,
                   double meta_lr, double max_grad_norm);

// Task source for meta-training: (iteration, index within batch) -> task.
using TaskSource = std::function<sim::TaskSpec(std::size_t, std::size_t)>;

TaskSource category_tasks(sim::Category category, std::uint64_t seed,
                          const sim::PhysicalParams& params,
                          const sim::TaskSamplerConfig& sampler);

using IterationCallback = std::function<void(const IterationRecord&)>;

MetaState meta_train(const MetaConfig& config, const ppo::PpoConfig& ppo,
                     const TaskSource& tasks, std::size_t num_pairs,
                     std::uint64_t seed,
                     std::optional<ppo::PolicyModel> init = std::nullopt,
                     const IterationCallback& on_iteration = {});

struct AdaptResult {
  ppo::PolicyModel model;
  std::vector<ppo::EpochStats> curve;
};

// Standard PPO training for `epochs` epochs starting from `init`.
AdaptResult meta_adapt(const ppo::PolicyModel& init, const sim::TaskSpec& task,
                       std::size_t epochs, const ppo::PpoConfig& ppo,
                       std::uint64_t seed);

}  // namespace metacp::meta
