#include "metacp/meta.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace metacp::meta {

void MetaConfig::validate() const {
  if (task_batch_size < 1) throw std::invalid_argument("meta: task_batch_size >= 1");
  if (inner_steps < 1) throw std::invalid_argument("meta: inner_steps >= 1");
  if (!(inner_lr >= 0.0 && meta_lr >= 0.0)) {
    throw std::invalid_argument("meta: learning rates must be >= 0");
  }
  if (!(max_grad_norm > 0.0)) throw std::invalid_argument("meta: max_grad_norm > 0");
  if (!(tolerance >= 0.0)) throw std::invalid_argument("meta: tolerance >= 0");
}

std::vector<double> sgd_adapt(std::span<const double> theta,
                              const GradientFn& grad, double lr,
                              std::size_t steps) {
  std::vector<double> out(theta.begin(), theta.end());
  for (std::size_t s = 0; s < steps; ++s) {
    const auto g = grad(out);
    nn::sgd_step(out, g, lr);
  }
  return out;
}

std::vector<double> first_order_meta_gradient(std::span<const double> theta,
                                              const GradientFn& inner_grad,
                                              const GradientFn& outer_grad,
                                              double lr, std::size_t steps) {
  return outer_grad(sgd_adapt(theta, inner_grad, lr, steps));
}

namespace {

struct Rollout {
  std::vector<ppo::Sample> batch;
  ppo::Trajectory traj;
};

Rollout rollout(const ppo::PolicyModel& model, const sim::TaskSpec& task,
                const ppo::PpoConfig& cfg, std::uint64_t seed) {
  sim::Environment env(std::make_shared<const sim::TaskSpec>(task),
                       derive_seed(seed, Stream::EnvDynamics));
  Rng policy_rng = make_rng(seed, Stream::Policy);
  Rollout r;
  r.traj = ppo::collect(model.actor, model.critic, env, cfg.steps_per_epoch,
                        policy_rng);
  const auto adv = ppo::compute_advantages(r.traj.rewards(), r.traj.values(),
                                           cfg.gamma, cfg.gae_lambda);
  r.batch = ppo::make_batch(r.traj, adv);
  return r;
}

}  // namespace

InnerResult inner_adapt(const ppo::PolicyModel& meta_model,
                        const sim::TaskSpec& task, double inner_lr,
                        std::size_t inner_steps, const ppo::PpoConfig& ppo,
                        std::uint64_t seed) {
  Rollout data = rollout(meta_model, task, ppo, seed);
  ppo::PolicyModel scratch = meta_model;
  auto loss_at = [&](std::span<const double> theta) {
    scratch.assign(theta);
    return ppo::unified_loss(scratch, data.batch, ppo.clip_eps);
  };
  const GradientFn grad = [&](std::span<const double> theta) {
    return loss_at(theta).grad;
  };

  const auto theta = meta_model.flatten();
  InnerResult out;
  out.loss_before = loss_at(theta).value;
  const auto adapted = sgd_adapt(theta, grad, inner_lr, inner_steps);
  out.loss_after = loss_at(adapted).value;
  out.adapted = meta_model;
  out.adapted.assign(adapted);
  out.data = std::move(data.traj);
  return out;
}

AdaptationGradient adaptation_gradient(const ppo::PolicyModel& adapted,
                                       const sim::TaskSpec& task,
                                       const ppo::PpoConfig& ppo,
                                       std::uint64_t seed) {
  Rollout data = rollout(adapted, task, ppo, seed);
  auto loss = ppo::unified_loss(adapted, data.batch, ppo.clip_eps);
  return {std::move(loss.grad), loss.value, std::move(data.traj)};
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double meta_update(std::span<double> theta,
                   std::span<const std::vector<double>> task_grads,
                   double meta_lr, double max_grad_norm) {
  if (task_grads.empty()) throw std::invalid_argument("meta_update: no gradients");
  std::vector<double> mean(theta.size(), 0.0);
  for (const auto& g : task_grads) {
    if (g.size() != theta.size()) {
      throw std::invalid_argument("meta_update: gradient length mismatch");
    }
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
  }
  const double inv = 1.0 / static_cast<double>(task_grads.size());
  for (auto& m : mean) m *= inv;
  const double norm = l2_norm(mean);
  const double scale = norm > max_grad_norm ? max_grad_norm / norm : 1.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] -= meta_lr * scale * mean[i];
  }
  return norm;
}

TaskSource category_tasks(sim::Category category, std::uint64_t seed,
                          const sim::PhysicalParams& params,
                          const sim::TaskSamplerConfig& sampler) {
  return [=](std::size_t iteration, std::size_t index) {
    const std::uint64_t task_seed =
        derive_seed(seed, Stream::TaskSampling, (iteration << 16) | index);
    return sim::sample_task(category, task_seed, params, sampler);
  };
}

MetaState meta_train(const MetaConfig& config, const ppo::PpoConfig& ppo,
                     const TaskSource& tasks, std::size_t num_pairs,
                     std::uint64_t seed, std::optional<ppo::PolicyModel> init,
                     const IterationCallback& on_iteration) {
  config.validate();
  ppo.validate();
  MetaState state;
  state.meta_model = init ? std::move(*init)
                          : ppo::PolicyModel::init(num_pairs,
                                                   derive_seed(seed, Stream::Init));
  auto theta = state.meta_model.flatten();

  const std::size_t window = std::max<std::size_t>(config.convergence_window, 1);
  std::vector<std::vector<double>> grads(config.task_batch_size);
  for (std::size_t it = 0; it < config.meta_iterations; ++it) {
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < config.task_batch_size; ++i) {
      const sim::TaskSpec task = tasks(it, i);
      const std::uint64_t run_seed =
          derive_seed(seed, Stream::Policy, (it << 16) | i);
      const auto inner = inner_adapt(state.meta_model, task, config.inner_lr,
                                     config.inner_steps, ppo,
                                     derive_seed(run_seed, Stream::EnvDynamics, 0));
      auto outer = adaptation_gradient(inner.adapted, task, ppo,
                                       derive_seed(run_seed, Stream::EnvDynamics, 1));
      loss_sum += outer.loss;
      grads[i] = std::move(outer.grad);
    }
    IterationRecord rec;
    rec.iteration = it + 1;
    rec.mean_adaptation_loss = loss_sum / static_cast<double>(config.task_batch_size);
    rec.grad_norm = meta_update(theta, grads, config.meta_lr, config.max_grad_norm);
    state.meta_model.assign(theta);
    state.iteration = it + 1;
    state.history.push_back(rec);
    if (on_iteration) on_iteration(rec);

    if (config.tolerance > 0.0 && state.history.size() >= 2 * window) {
      double recent = 0.0;
      double previous = 0.0;
      const std::size_t n = state.history.size();
      for (std::size_t j = 0; j < window; ++j) {
        recent += state.history[n - 1 - j].mean_adaptation_loss;
        previous += state.history[n - 1 - window - j].mean_adaptation_loss;
      }
      if (std::abs(recent - previous) <
          config.tolerance * std::max(std::abs(previous), 1e-12)) {
        break;
      }
    }
  }
  return state;
}

AdaptResult meta_adapt(const ppo::PolicyModel& init, const sim::TaskSpec& task,
                       std::size_t epochs, const ppo::PpoConfig& ppo,
                       std::uint64_t seed) {
  ppo.validate();
  sim::Environment env(std::make_shared<const sim::TaskSpec>(task),
                       derive_seed(seed, Stream::EnvDynamics));
  ppo::Agent agent(init, seed);
  AdaptResult out;
  for (std::size_t e = 0; e < epochs; ++e) {
    out.curve.push_back(ppo::train_epoch(agent, env, ppo));
  }
  out.model = std::move(agent.model);
  return out;
}

}  // namespace metacp::meta
