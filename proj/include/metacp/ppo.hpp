#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "metacp/neural.hpp"
#include "metacp/rng.hpp"
#include "metacp/simenv/env.hpp"

namespace metacp::ppo {

struct PpoConfig {
  double clip_eps = 0.2;
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t steps_per_epoch = 750;
  std::size_t update_epochs = 4;
  std::size_t minibatch_size = 125;
  std::size_t sampling_refresh = 1;  // epochs between sampling-policy refreshes

  void validate() const;
  bool operator==(const PpoConfig&) const = default;
};

// Actor (policy heads) and critic networks. Flattened as [actor, critic].
struct PolicyModel {
  nn::ModelWeights actor;
  nn::ModelWeights critic;

  static PolicyModel init(std::size_t num_pairs, std::uint64_t seed);

  std::size_t size() const { return actor.size() + critic.size(); }
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const PolicyModel&) const = default;
};

std::size_t feature_dim(std::size_t num_pairs);

// [B/B_total, W_k/8..., D_k/d_max..., x_k(t-1)...]
std::vector<double> featurize(const sim::EnvState& state,
                              const sim::PhysicalParams& p);

// Per-head log-softmax of the actor logits, laid out like the outputs.
std::vector<double> head_log_probs(const nn::ForwardCache& cache,
                                   std::size_t heads);

double joint_log_prob(std::span<const double> log_probs,
                      const sim::Action& action);

struct SampledAction {
  sim::Action action;
  double log_prob = 0.0;
};

// Head k outputs [P(SP), P(CP)]; each head is sampled independently.
SampledAction sample_action(const nn::ModelWeights& actor,
                            std::span<const double> features, Rng& rng);

struct Transition {
  std::vector<double> features;
  sim::Action action;
  double reward = 0.0;
  double log_prob = 0.0;  // joint log-prob under the sampling policy
  double value = 0.0;     // critic estimate at collection time
  bool feasible = true;
  int switch_count = 0;
};

struct Trajectory {
  std::vector<Transition> steps;

  std::size_t size() const { return steps.size(); }
  std::vector<double> rewards() const;
  std::vector<double> values() const;
};

Trajectory collect(const nn::ModelWeights& sampling_actor,
                   const nn::ModelWeights& critic, sim::Environment& env,
                   std::size_t steps, Rng& policy_rng);

struct Advantages {
  std::vector<double> raw;         // GAE(gamma, lambda)
  std::vector<double> normalized;  // zero mean, unit variance
  std::vector<double> returns;     // discounted reward-to-go to the end
};

// The trajectory is treated as terminating after its last step.
Advantages compute_advantages(std::span<const double> rewards,
                              std::span<const double> values, double gamma,
                              double lambda);

struct Sample {
  std::vector<double> features;
  sim::Action action;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double return_to_go = 0.0;
};

std::vector<Sample> make_batch(const Trajectory& traj, const Advantages& adv);

// Surrogate term min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_term(double ratio, double advantage, double clip_eps);

struct ActorLoss {
  double objective = 0.0;     // clipped surrogate J (to be maximized)
  std::vector<double> grad;   // dJ/dphi
  int clamped_ratios = 0;     // log-ratios clamped to +-20
  double clip_fraction = 0.0;
};

ActorLoss actor_loss_and_grad(const nn::ModelWeights& actor,
                              std::span<const Sample> batch, double clip_eps);

struct CriticLoss {
  double loss = 0.0;
  std::vector<double> grad;
};

CriticLoss critic_loss_and_grad(const nn::ModelWeights& critic,
                                std::span<const Sample> batch);

struct UnifiedLoss {
  double value = 0.0;  // -J + L^c
  double actor_objective = 0.0;
  double critic_loss = 0.0;
  std::vector<double> grad;  // flattened like PolicyModel
};

UnifiedLoss unified_loss(const PolicyModel& model,
                         std::span<const Sample> batch, double clip_eps);

struct Agent {
  PolicyModel model;
  nn::ModelWeights sampling_actor;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;
  std::uint64_t epoch = 0;
  Rng policy_rng;
  Rng minibatch_rng;

  Agent(PolicyModel init, std::uint64_t seed);
};

struct EpochStats {
  std::uint64_t epoch = 0;
  double mean_reward = 0.0;
  double actor_loss = 0.0;   // mean -J over minibatch updates
  double critic_loss = 0.0;  // mean L^c over minibatch updates
  double feasible_rate = 0.0;
  double switch_rate = 0.0;  // mean switches per pair per step
  double wall_ms = 0.0;
  int clamped_ratios = 0;
};

EpochStats train_epoch(Agent& agent, sim::Environment& env,
                       const PpoConfig& config);

}  // namespace metacp::ppo
