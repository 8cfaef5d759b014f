#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <utility>
#include <vector>

#include "safeswarm/env.hpp"
#include "safeswarm/nn.hpp"

namespace safeswarm {

// One agent-step. `action` is the raw (pre-squash) policy sample; the env
// command is v_max*tanh(action). `state_index` points at the pre-action
// global state shared by every agent at that step.
struct Transition {
    std::vector<double> obs;
    std::vector<double> action;
    double logprob_old = 0.0;
    double reward = 0.0;  // scaled reward used for GAE/critic targets
    double value_estimate = 0.0;
    int state_index = -1;
    bool done = false;  // true termination (landed/crashed), not horizon truncation
};

struct Sample {
    std::vector<double> obs;
    std::vector<double> action;
    double logprob_old = 0.0;
    double advantage = 0.0;
    double ret = 0.0;
    double value_old = 0.0;
    int state_index = -1;
};

struct RolloutBuffer {
    std::vector<std::vector<double>> global_states;
    std::vector<Sample> samples;
    bool finalized = false;

    // collection stats (raw, unscaled rewards)
    int env_steps = 0;
    int episodes = 0;            // completed episodes
    int agent_episodes = 0;      // completed agent-episodes
    double mean_episode_reward = 0.0;
    double success_rate = 0.0;   // landed fraction of completed agent-episodes
    long long fallback_count = 0;
    long long collision_count = 0;
};

struct TrainConfig {
    double gamma_d = 0.99;
    double gae_lambda = 0.95;
    double clip_eps = 0.2;
    int epochs = 10;
    int minibatches = 4;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double lr = 3e-4;
    int rollout_steps = 2048;
    int iterations = 50;
    std::uint64_t seed = 0;
    bool use_filter = true;
    bool normalize_advantages = true;
    double reward_scale = 0.01;   // applied to rewards before GAE/critic targets
    double max_grad_norm = 0.5;   // 0 disables clipping
    std::vector<int> hidden = {64, 64};
    double log_std_init = -0.5;
    int checkpoint_every = 0;     // iterations between checkpoints; 0 = final only
};

void validate(const TrainConfig& cfg);

struct TrainStats {
    int iteration = 0;
    double mean_episode_reward = 0.0;
    double value_loss = 0.0;
    double policy_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    double success_rate = 0.0;
    long long fallback_count = 0;
    int env_steps = 0;
    int episodes = 0;
};

// Derived per-episode seed; all rollout randomness is a pure function of
// (run seed, iteration, episode), so resumed runs replay identically.
std::uint64_t episode_seed(std::uint64_t run_seed, int iteration, int episode_index);

std::pair<std::vector<double>, std::vector<double>> compute_gae(
    const std::vector<double>& rewards, const std::vector<double>& values,
    const std::vector<std::uint8_t>& dones, double bootstrap_value, double gamma_d,
    double gae_lambda);

double ppo_policy_objective(double logprob_new, double logprob_old, double advantage,
                            double clip_eps);

double value_loss(const std::vector<double>& values_new, const std::vector<double>& returns,
                  const std::vector<double>& values_old, double clip_eps);

RolloutBuffer collect_rollouts(const GaussianPolicy& policy, const MlpParams& critic,
                               const EnvConfig& env_cfg, const TrainConfig& cfg, int iteration);

TrainStats ppo_update(GaussianPolicy& policy, MlpParams& critic, const RolloutBuffer& buffer,
                      const TrainConfig& cfg, AdamState& adam_policy, AdamState& adam_critic,
                      int iteration);

struct TrainResult {
    GaussianPolicy policy;
    MlpParams critic;
    AdamState adam_policy;
    AdamState adam_critic;
    std::vector<TrainStats> stats;
    int iterations_done = 0;
};

using IterationCallback = std::function<void(const TrainStats&, const TrainResult&)>;

// Runs collect/update cycles. `resume` continues from a loaded checkpoint
// (its stats are not replayed); iteration indexing stays absolute.
TrainResult train(const EnvConfig& env_cfg, const TrainConfig& cfg,
                  const IterationCallback& on_iteration = {},
                  const TrainResult* resume = nullptr);

// Versioned text checkpoint: nets + optimizer moments + iteration counter.
void save_checkpoint(std::ostream& os, const TrainResult& r);
TrainResult load_checkpoint(std::istream& is);
void save_checkpoint_file(const std::string& path, const TrainResult& r);
TrainResult load_checkpoint_file(const std::string& path);

}  // namespace safeswarm
