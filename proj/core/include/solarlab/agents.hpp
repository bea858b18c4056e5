#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "solarlab/env.hpp"
#include "solarlab/nn.hpp"

namespace solarlab {

// which advantage recursion to run; Standard is the full reverse sweep,
// Truncated2 keeps only the first two delta terms per step
enum class GaeForm : uint8_t { Standard = 0, Truncated2 = 1 };

const char* gae_form_name(GaeForm f);
GaeForm gae_form_from_name(const std::string& name);

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 30;
  int update_passes = 4;
  int minibatch = 32;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double entropy_coef = 0.01;
  uint64_t seed = 42;
  bool normalize_advantages = true;
  // strict reading of training-only-on-sales: drop hold transitions
  // from the update minibatches (advantages still use the full episode)
  bool sell_transitions_only = false;
  GaeForm gae_form = GaeForm::Standard;
  std::vector<int> actor_hidden = {64, 64, 64};
  std::vector<int> critic_hidden = {64, 64};

  void validate() const;
};

struct Transition {
  Vector obs;  // normalized 4-vector
  int action = 0;
  double logp_old = 0.0;
  double reward = 0.0;  // scaled by 1/r_scale at collection time
  double value = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  std::vector<double> advantages;  // filled by gae()
  std::vector<double> returns;
  double episode_total = 0.0;  // raw currency, not scaled

  size_t size() const { return steps.size(); }
  // shift/scale to mean 0, std 1; a constant buffer becomes all zeros
  void normalize_advantages();
};

struct PpoAgent {
  MlpParams actor;   // 4 -> hidden -> 2 logits
  MlpParams critic;  // 4 -> hidden -> 1 value
  NormStats norm;

  static PpoAgent make(const PPOConfig& cfg, const NormStats& norm, Rng& rng);
  static std::vector<Activation> actor_acts(size_t hidden_layers);
  static std::vector<Activation> critic_acts(size_t hidden_layers);
};

// action probabilities, softmax over the two logits
Vector actor_forward(const MlpParams& actor, const Observation& obs);
double critic_forward(const MlpParams& critic, const Observation& obs);

// one full episode from reset to done, actions sampled from the actor
RolloutBuffer collect_rollout(TradingEnv& env, const PpoAgent& agent, Rng& rng);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), accumulated
// as advantage_t = sum_l (gamma*lambda)^l delta_{t+l} in one reverse sweep;
// bootstrap value past the buffer end is 0
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const uint8_t> dones, double gamma, double lambda,
              GaeForm form = GaeForm::Standard);

// min(ratio * adv, clamp(ratio, 1-eps, 1+eps) * adv)
double clipped_surrogate(double ratio, double advantage, double clip_eps);

struct PpoLossStats {
  double policy_loss = 0.0;  // includes the entropy bonus term
  double value_loss = 0.0;
  double entropy = 0.0;
  int used = 0;
  int skipped = 0;  // transitions dropped for non-finite ratios
};

// Mean losses and parameter gradients over buffer rows `idx`. Gradients
// are accumulated into the (caller-zeroed) accumulators.
PpoLossStats ppo_loss(const RolloutBuffer& buffer, std::span<const size_t> idx,
                      const MlpParams& actor, const MlpParams& critic,
                      double clip_eps, double entropy_coef, Grads& actor_grads,
                      Grads& critic_grads);

struct TrainPpoResult {
  PpoAgent agent;
  std::vector<double> curve;  // per-epoch raw episode total
};

TrainPpoResult train_ppo(TradingEnv& env, const PPOConfig& cfg,
                         const NormStats& norm);

Action sell_only_policy();
Action random_policy(Rng& rng);

// shared evaluation interface for the protocol's five agents
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode(const TradingEnv& env, Rng& rng) {}
  virtual Action act(const Observation& obs, const TradingEnv& env,
                     Rng& rng) = 0;
};

class SellOnlyPolicy final : public Policy {
 public:
  Action act(const Observation&, const TradingEnv&, Rng&) override {
    return sell_only_policy();
  }
};

class RandomPolicy final : public Policy {
 public:
  Action act(const Observation&, const TradingEnv&, Rng& rng) override {
    return random_policy(rng);
  }
};

class PpoPolicy final : public Policy {
 public:
  explicit PpoPolicy(const PpoAgent& agent, bool greedy = false)
      : agent_(&agent), greedy_(greedy) {}
  Action act(const Observation& obs, const TradingEnv&, Rng& rng) override;

 private:
  const PpoAgent* agent_;
  bool greedy_;  // argmax, ties break toward HOLD
};

// Runs `episodes` episodes, each with an independent RNG substream derived
// from `rng`'s seed by episode index, so results do not depend on
// evaluation order. Returns raw per-episode totals, episode order.
std::vector<double> evaluate(Policy& policy, TradingEnv& env, int episodes,
                             const Rng& rng);

double mean_of(std::span<const double> xs);

}  // namespace solarlab
