#include "metacp/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace metacp::ppo {

namespace {

constexpr double kMaxLogRatio = 20.0;

}  // namespace

void PpoConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw std::invalid_argument("ppo: clip_eps must be in (0, 1)");
  }
  if (!(lr_actor >= 0.0 && lr_critic >= 0.0)) {
    throw std::invalid_argument("ppo: learning rates must be >= 0");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("ppo: gamma must be in [0, 1)");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("ppo: gae_lambda must be in [0, 1]");
  }
  if (steps_per_epoch == 0 || update_epochs == 0 || minibatch_size == 0 ||
      sampling_refresh == 0) {
    throw std::invalid_argument("ppo: step and batch counts must be >= 1");
  }
}

PolicyModel PolicyModel::init(std::size_t num_pairs, std::uint64_t seed) {
  const std::size_t in = feature_dim(num_pairs);
  return {nn::init_weights(nn::MlpSpec::actor(in, num_pairs),
                           derive_seed(seed, Stream::Init, 0)),
          nn::init_weights(nn::MlpSpec::critic(in),
                           derive_seed(seed, Stream::Init, 1))};
}

std::vector<double> PolicyModel::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  flat.insert(flat.end(), actor.values.begin(), actor.values.end());
  flat.insert(flat.end(), critic.values.begin(), critic.values.end());
  return flat;
}

void PolicyModel::assign(std::span<const double> flat) {
  if (flat.size() != size()) {
    throw std::invalid_argument("PolicyModel::assign: length mismatch");
  }
  std::copy_n(flat.begin(), actor.size(), actor.values.begin());
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(actor.size()), flat.end(),
            critic.values.begin());
}

std::size_t feature_dim(std::size_t num_pairs) { return 1 + 3 * num_pairs; }

std::vector<double> featurize(const sim::EnvState& state,
                              const sim::PhysicalParams& p) {
  const std::size_t k = state.num_pairs();
  std::vector<double> f;
  f.reserve(feature_dim(k));
  f.push_back(state.bandwidth / p.B_total);
  for (int w : state.workloads) {
    f.push_back(static_cast<double>(w) / sim::kMaxWorkload);
  }
  for (double d : state.distances) f.push_back(d / p.d_max);
  for (auto m : state.prev_modes) f.push_back(m ? 1.0 : 0.0);
  return f;
}

std::vector<double> head_log_probs(const nn::ForwardCache& cache,
                                   std::size_t heads) {
  const auto logits = cache.logits();
  const std::size_t width = logits.size() / heads;
  std::vector<double> out(logits.size());
  for (std::size_t h = 0; h < heads; ++h) {
    const auto z = logits.subspan(h * width, width);
    const double peak = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (double v : z) total += std::exp(v - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t j = 0; j < width; ++j) out[h * width + j] = z[j] - log_norm;
  }
  return out;
}

double joint_log_prob(std::span<const double> log_probs,
                      const sim::Action& action) {
  const std::size_t width = log_probs.size() / action.modes.size();
  double lp = 0.0;
  for (std::size_t k = 0; k < action.modes.size(); ++k) {
    lp += log_probs[k * width + action.modes[k]];
  }
  return lp;
}

SampledAction sample_action(const nn::ModelWeights& actor,
                            std::span<const double> features, Rng& rng) {
  const auto cache = nn::forward(actor, features);
  const std::size_t heads = actor.spec.heads;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SampledAction out;
  out.action.modes.resize(heads);
  for (std::size_t k = 0; k < heads; ++k) {
    out.action.modes[k] = u(rng) < cache.outputs[2 * k + 1] ? 1 : 0;
  }
  out.log_prob = joint_log_prob(head_log_probs(cache, heads), out.action);
  return out;
}

std::vector<double> Trajectory::rewards() const {
  std::vector<double> r;
  r.reserve(steps.size());
  for (const auto& s : steps) r.push_back(s.reward);
  return r;
}

std::vector<double> Trajectory::values() const {
  std::vector<double> v;
  v.reserve(steps.size());
  for (const auto& s : steps) v.push_back(s.value);
  return v;
}

Trajectory collect(const nn::ModelWeights& sampling_actor,
                   const nn::ModelWeights& critic, sim::Environment& env,
                   std::size_t steps, Rng& policy_rng) {
  Trajectory traj;
  traj.steps.reserve(steps);
  const auto& params = env.task().params;
  for (std::size_t t = 0; t < steps; ++t) {
    Transition tr;
    tr.features = featurize(env.state(), params);
    auto sampled = sample_action(sampling_actor, tr.features, policy_rng);
    tr.value = nn::forward(critic, tr.features).outputs[0];
    const auto outcome = env.step(sampled.action);
    tr.action = std::move(sampled.action);
    tr.log_prob = sampled.log_prob;
    tr.reward = outcome.reward;
    tr.feasible = outcome.feasible;
    tr.switch_count = outcome.switch_count;
    traj.steps.push_back(std::move(tr));
  }
  return traj;
}

Advantages compute_advantages(std::span<const double> rewards,
                              std::span<const double> values, double gamma,
                              double lambda) {
  if (rewards.size() != values.size()) {
    throw std::invalid_argument("compute_advantages: length mismatch");
  }
  const std::size_t n = rewards.size();
  Advantages out;
  out.raw.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double gae = 0.0;
  double ret = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 < n ? values[t + 1] : 0.0;
    const double td = rewards[t] + gamma * next_value - values[t];
    gae = td + gamma * lambda * gae;
    ret = rewards[t] + gamma * ret;
    out.raw[t] = gae;
    out.returns[t] = ret;
  }
  out.normalized = out.raw;
  if (n > 0) {
    const double mean = std::accumulate(out.raw.begin(), out.raw.end(), 0.0) / n;
    double var = 0.0;
    for (double a : out.raw) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    for (auto& a : out.normalized) a = (a - mean) / (sd + 1e-8);
  }
  return out;
}

std::vector<Sample> make_batch(const Trajectory& traj, const Advantages& adv) {
  std::vector<Sample> batch;
  batch.reserve(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& s = traj.steps[t];
    batch.push_back({s.features, s.action, s.log_prob, adv.normalized[t],
                     adv.returns[t]});
  }
  return batch;
}

double clipped_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

ActorLoss actor_loss_and_grad(const nn::ModelWeights& actor,
                              std::span<const Sample> batch, double clip_eps) {
  if (batch.empty()) throw std::invalid_argument("actor loss: empty batch");
  ActorLoss out;
  out.grad.assign(actor.size(), 0.0);
  const std::size_t heads = actor.spec.heads;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad_logits(actor.spec.output_dim());
  int clipped = 0;
  for (const auto& s : batch) {
    const auto cache = nn::forward(actor, s.features);
    const auto log_probs = head_log_probs(cache, heads);
    double log_ratio = joint_log_prob(log_probs, s.action) - s.old_log_prob;
    bool clamped = false;
    if (!(std::abs(log_ratio) <= kMaxLogRatio)) {
      log_ratio = std::isnan(log_ratio)
                      ? 0.0
                      : std::clamp(log_ratio, -kMaxLogRatio, kMaxLogRatio);
      clamped = true;
      ++out.clamped_ratios;
    }
    const double ratio = std::exp(log_ratio);
    const double a = s.advantage;
    out.objective += clipped_term(ratio, a, clip_eps) * inv_n;

    // The unclipped branch carries gradient unless the ratio has left the
    // trust region in the direction the advantage rewards.
    const bool outside = (a > 0.0 && ratio > 1.0 + clip_eps) ||
                         (a < 0.0 && ratio < 1.0 - clip_eps);
    if (outside) ++clipped;
    if (outside || clamped) continue;
    const double coeff = ratio * a * inv_n;
    for (std::size_t k = 0; k < heads; ++k) {
      for (std::size_t j = 0; j < 2; ++j) {
        const double p = cache.outputs[2 * k + j];
        grad_logits[2 * k + j] = coeff * ((s.action.modes[k] == j ? 1.0 : 0.0) - p);
      }
    }
    nn::backward_logits(actor, cache, grad_logits, out.grad);
  }
  out.clip_fraction = clipped * inv_n;
  return out;
}

CriticLoss critic_loss_and_grad(const nn::ModelWeights& critic,
                                std::span<const Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("critic loss: empty batch");
  CriticLoss out;
  out.grad.assign(critic.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto cache = nn::forward(critic, s.features);
    const double err = cache.outputs[0] - s.return_to_go;
    out.loss += err * err * inv_n;
    const double g = 2.0 * err * inv_n;
    nn::backward_logits(critic, cache, std::span<const double>(&g, 1), out.grad);
  }
  return out;
}

UnifiedLoss unified_loss(const PolicyModel& model,
                         std::span<const Sample> batch, double clip_eps) {
  const auto actor = actor_loss_and_grad(model.actor, batch, clip_eps);
  const auto critic = critic_loss_and_grad(model.critic, batch);
  UnifiedLoss out;
  out.actor_objective = actor.objective;
  out.critic_loss = critic.loss;
  out.value = -actor.objective + critic.loss;
  out.grad.reserve(model.size());
  for (double g : actor.grad) out.grad.push_back(-g);
  out.grad.insert(out.grad.end(), critic.grad.begin(), critic.grad.end());
  return out;
}

Agent::Agent(PolicyModel init, std::uint64_t seed)
    : model(std::move(init)),
      sampling_actor(model.actor),
      actor_opt(model.actor.size()),
      critic_opt(model.critic.size()),
      policy_rng(make_rng(seed, Stream::Policy)),
      minibatch_rng(make_rng(seed, Stream::Minibatch)) {}

EpochStats train_epoch(Agent& agent, sim::Environment& env,
                       const PpoConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const Trajectory traj =
      collect(agent.sampling_actor, agent.model.critic, env,
              config.steps_per_epoch, agent.policy_rng);
  const Advantages adv = compute_advantages(traj.rewards(), traj.values(),
                                            config.gamma, config.gae_lambda);
  const std::vector<Sample> batch = make_batch(traj, adv);

  EpochStats stats;
  stats.epoch = agent.epoch;
  for (const auto& s : traj.steps) {
    stats.mean_reward += s.reward;
    stats.feasible_rate += s.feasible ? 1.0 : 0.0;
    stats.switch_rate += s.switch_count;
  }
  const double n = static_cast<double>(traj.size());
  const double pairs = static_cast<double>(env.task().params.K);
  stats.mean_reward /= n;
  stats.feasible_rate /= n;
  stats.switch_rate /= n * pairs;

  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sample> minibatch;
  std::size_t updates = 0;
  for (std::size_t pass = 0; pass < config.update_epochs; ++pass) {
    std::shuffle(order.begin(), order.end(), agent.minibatch_rng);
    for (std::size_t start = 0; start < order.size();
         start += config.minibatch_size) {
      const std::size_t end = std::min(order.size(), start + config.minibatch_size);
      minibatch.clear();
      for (std::size_t i = start; i < end; ++i) minibatch.push_back(batch[order[i]]);

      auto actor = actor_loss_and_grad(agent.model.actor, minibatch, config.clip_eps);
      for (auto& g : actor.grad) g = -g;  // ascent on J
      const auto critic = critic_loss_and_grad(agent.model.critic, minibatch);
      nn::adam_step(agent.model.actor.values, actor.grad, agent.actor_opt,
                    config.lr_actor);
      nn::adam_step(agent.model.critic.values, critic.grad, agent.critic_opt,
                    config.lr_critic);
      stats.actor_loss -= actor.objective;
      stats.critic_loss += critic.loss;
      stats.clamped_ratios += actor.clamped_ratios;
      ++updates;
    }
  }
  stats.actor_loss /= static_cast<double>(updates);
  stats.critic_loss /= static_cast<double>(updates);

  ++agent.epoch;
  if (agent.epoch % config.sampling_refresh == 0) {
    agent.sampling_actor = agent.model.actor;
  }
  stats.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - started)
                      .count();
  return stats;
}

}  // namespace metacp::ppo
