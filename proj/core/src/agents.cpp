#include "solarlab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "solarlab/errors.hpp"

namespace solarlab {

const char* gae_form_name(GaeForm f) {
  return f == GaeForm::Standard ? "standard" : "truncated2";
}

GaeForm gae_form_from_name(const std::string& name) {
  if (name == "standard") return GaeForm::Standard;
  if (name == "truncated2") return GaeForm::Truncated2;
  throw ConfigError("advantage form must be 'standard' or 'truncated2', got '" +
                    name + "'");
}

void PPOConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ConfigError("gamma must be in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must be in [0, 1]");
  if (!(clip_eps > 0.0)) throw ConfigError("clip epsilon must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (update_passes < 1) throw ConfigError("need at least one update pass");
  if (minibatch < 1) throw ConfigError("minibatch size must be positive");
  if (!(lr_actor > 0.0 && lr_critic > 0.0))
    throw ConfigError("learning rates must be positive");
  if (entropy_coef < 0.0)
    throw ConfigError("entropy coefficient must be non-negative");
  if (actor_hidden.empty() || critic_hidden.empty())
    throw ConfigError("actor and critic need at least one hidden layer");
  for (int h : actor_hidden)
    if (h < 1) throw ConfigError("actor hidden widths must be positive");
  for (int h : critic_hidden)
    if (h < 1) throw ConfigError("critic hidden widths must be positive");
}

void RolloutBuffer::normalize_advantages() {
  size_t n = advantages.size();
  if (n == 0) return;
  double mu = 0.0;
  for (double a : advantages) mu += a;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double a : advantages) var += (a - mu) * (a - mu);
  double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < 1e-12) {
    for (double& a : advantages) a = 0.0;
    return;
  }
  for (double& a : advantages) a = (a - mu) / sd;
}

std::vector<Activation> PpoAgent::actor_acts(size_t hidden_layers) {
  std::vector<Activation> acts(hidden_layers, Activation::Tanh);
  acts.push_back(Activation::Identity);
  return acts;
}

std::vector<Activation> PpoAgent::critic_acts(size_t hidden_layers) {
  return actor_acts(hidden_layers);
}

PpoAgent PpoAgent::make(const PPOConfig& cfg, const NormStats& norm, Rng& rng) {
  cfg.validate();
  norm.validate();
  PpoAgent a;
  std::vector<int> adims{4};
  adims.insert(adims.end(), cfg.actor_hidden.begin(), cfg.actor_hidden.end());
  adims.push_back(2);
  std::vector<int> cdims{4};
  cdims.insert(cdims.end(), cfg.critic_hidden.begin(), cfg.critic_hidden.end());
  cdims.push_back(1);
  Rng actor_rng = rng.substream(1);
  Rng critic_rng = rng.substream(2);
  a.actor = MlpParams::make(adims, actor_acts(cfg.actor_hidden.size()), actor_rng);
  a.critic = MlpParams::make(cdims, critic_acts(cfg.critic_hidden.size()), critic_rng);
  a.norm = norm;
  return a;
}

Vector actor_forward(const MlpParams& actor, const Observation& obs) {
  return softmax(mlp_forward(actor, obs.to_vector()));
}

double critic_forward(const MlpParams& critic, const Observation& obs) {
  return mlp_forward(critic, obs.to_vector())[0];
}

RolloutBuffer collect_rollout(TradingEnv& env, const PpoAgent& agent, Rng& rng) {
  RolloutBuffer buf;
  buf.steps.reserve(static_cast<size_t>(env.length()));
  Observation obs = env.reset();
  double r_scale = env.norm().r_scale;
  bool done = false;
  while (!done) {
    Vector probs = actor_forward(agent.actor, obs);
    auto [action, logp] = categorical_sample(probs, rng);
    double value = critic_forward(agent.critic, obs);
    TradingEnv::StepResult sr =
        env.step(action == 1 ? Action::Sell : Action::Hold);
    Transition t;
    t.obs = obs.to_vector();
    t.action = action;
    t.logp_old = logp;
    t.reward = sr.reward / r_scale;
    t.value = value;
    t.done = sr.done;
    buf.steps.push_back(std::move(t));
    obs = sr.obs;
    done = sr.done;
  }
  buf.episode_total = env.episode_total();
  return buf;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const uint8_t> dones, double gamma, double lambda,
              GaeForm form) {
  size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw ContractError("advantage inputs differ in length");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("gamma and lambda must lie in [0, 1]");
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  if (n == 0) return out;

  auto delta_at = [&](size_t t) {
    double next_v =
        (t + 1 < n && dones[t] == 0) ? values[t + 1] : 0.0;
    double nonterm = dones[t] == 0 ? 1.0 : 0.0;
    return rewards[t] + gamma * next_v * nonterm - values[t];
  };

  if (form == GaeForm::Standard) {
    double carry = 0.0;
    for (size_t t = n; t-- > 0;) {
      double nonterm = dones[t] == 0 ? 1.0 : 0.0;
      carry = delta_at(t) + gamma * lambda * nonterm * carry;
      out.advantages[t] = carry;
    }
  } else {
    // first two delta terms only
    for (size_t t = 0; t < n; ++t) {
      double a = delta_at(t);
      if (t + 1 < n && dones[t] == 0) a += gamma * lambda * delta_at(t + 1);
      out.advantages[t] = a;
    }
  }
  for (size_t t = 0; t < n; ++t) out.returns[t] = out.advantages[t] + values[t];
  return out;
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoLossStats ppo_loss(const RolloutBuffer& buffer, std::span<const size_t> idx,
                      const MlpParams& actor, const MlpParams& critic,
                      double clip_eps, double entropy_coef, Grads& actor_grads,
                      Grads& critic_grads) {
  if (buffer.advantages.size() != buffer.steps.size() ||
      buffer.returns.size() != buffer.steps.size())
    throw ContractError("advantages not computed for this buffer");

  PpoLossStats stats;
  MlpCache acache, ccache;
  for (size_t i : idx) {
    if (i >= buffer.steps.size()) throw ContractError("minibatch index out of range");
    const Transition& t = buffer.steps[i];
    double adv = buffer.advantages[i];
    double ret = buffer.returns[i];

    Vector logits = mlp_forward(actor, t.obs, acache);
    Vector probs = softmax(logits);
    double logp = std::log(probs[t.action]);
    double ratio = std::exp(logp - t.logp_old);
    if (!std::isfinite(ratio)) {
      ++stats.skipped;
      std::cerr << "update: dropped a transition with non-finite ratio\n";
      continue;
    }

    double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    double s_plain = ratio * adv;
    double s_clip = clipped * adv;
    double h = entropy(probs);
    stats.policy_loss += -std::min(s_plain, s_clip) - entropy_coef * h;
    stats.entropy += h;

    // d(-surrogate)/dlogp: zero when the clipped branch is active and flat
    double dsurr_dratio;
    if (s_plain <= s_clip) {
      dsurr_dratio = adv;
    } else {
      bool flat = ratio < 1.0 - clip_eps || ratio > 1.0 + clip_eps;
      dsurr_dratio = flat ? 0.0 : adv;
    }
    double dloss_dlogp = -dsurr_dratio * ratio;  // dratio/dlogp = ratio

    Vector dlogits(logits.size());
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
      double ind = j == t.action ? 1.0 : 0.0;
      dlogits[j] = dloss_dlogp * (ind - probs[j]);
      // entropy bonus: d(-c H)/dlogit_j = c p_j (log p_j + H)
      if (probs[j] > 0.0)
        dlogits[j] += entropy_coef * probs[j] * (std::log(probs[j]) + h);
    }
    mlp_backward(actor, acache, dlogits, actor_grads);

    Vector v = mlp_forward(critic, t.obs, ccache);
    double diff = v[0] - ret;
    stats.value_loss += diff * diff;
    Vector dv(1);
    dv[0] = 2.0 * diff;
    mlp_backward(critic, ccache, dv, critic_grads);

    ++stats.used;
  }

  if (stats.used > 0) {
    double inv = 1.0 / static_cast<double>(stats.used);
    stats.policy_loss *= inv;
    stats.value_loss *= inv;
    stats.entropy *= inv;
    actor_grads.scale(inv);
    critic_grads.scale(inv);
  }
  return stats;
}

TrainPpoResult train_ppo(TradingEnv& env, const PPOConfig& cfg,
                         const NormStats& norm) {
  cfg.validate();
  Rng master(cfg.seed);
  Rng init_rng = master.substream(1);
  Rng rollout_rng = master.substream(2);
  Rng shuffle_rng = master.substream(3);

  TrainPpoResult result;
  result.agent = PpoAgent::make(cfg, norm, init_rng);
  result.curve.reserve(static_cast<size_t>(cfg.epochs));

  AdamState actor_opt = AdamState::init(result.agent.actor, cfg.lr_actor);
  AdamState critic_opt = AdamState::init(result.agent.critic, cfg.lr_critic);
  Grads ag = Grads::zeros_like(result.agent.actor);
  Grads cg = Grads::zeros_like(result.agent.critic);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    RolloutBuffer buf = collect_rollout(env, result.agent, rollout_rng);
    std::vector<double> rewards(buf.size()), values(buf.size());
    std::vector<uint8_t> dones(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) {
      rewards[i] = buf.steps[i].reward;
      values[i] = buf.steps[i].value;
      dones[i] = buf.steps[i].done ? 1 : 0;
    }
    GaeResult g = gae(rewards, values, dones, cfg.gamma, cfg.lambda, cfg.gae_form);
    buf.advantages = std::move(g.advantages);
    buf.returns = std::move(g.returns);
    if (cfg.normalize_advantages) buf.normalize_advantages();

    std::vector<size_t> order;
    order.reserve(buf.size());
    for (size_t i = 0; i < buf.size(); ++i)
      if (!cfg.sell_transitions_only || buf.steps[i].action == 1)
        order.push_back(i);

    for (int pass = 0; pass < cfg.update_passes; ++pass) {
      shuffle_rng.shuffle(order);
      for (size_t start = 0; start < order.size();
           start += static_cast<size_t>(cfg.minibatch)) {
        size_t stop = std::min(order.size(),
                               start + static_cast<size_t>(cfg.minibatch));
        std::span<const size_t> batch(order.data() + start, stop - start);
        ag.set_zero();
        cg.set_zero();
        ppo_loss(buf, batch, result.agent.actor, result.agent.critic,
                 cfg.clip_eps, cfg.entropy_coef, ag, cg);
        if (!adam_step(result.agent.actor, ag, actor_opt))
          std::cerr << "update: skipped an actor step with non-finite grads\n";
        if (!adam_step(result.agent.critic, cg, critic_opt))
          std::cerr << "update: skipped a critic step with non-finite grads\n";
      }
    }
    result.curve.push_back(buf.episode_total);
  }
  return result;
}

Action sell_only_policy() { return Action::Sell; }

Action random_policy(Rng& rng) {
  return rng.uniform_int(2) == 1 ? Action::Sell : Action::Hold;
}

Action PpoPolicy::act(const Observation& obs, const TradingEnv&, Rng& rng) {
  Vector probs = actor_forward(agent_->actor, obs);
  if (greedy_) {
    // first maximum wins, so exact ties go to HOLD
    Eigen::Index best = 0;
    probs.maxCoeff(&best);
    return best == 1 ? Action::Sell : Action::Hold;
  }
  auto [action, logp] = categorical_sample(probs, rng);
  (void)logp;
  return action == 1 ? Action::Sell : Action::Hold;
}

std::vector<double> evaluate(Policy& policy, TradingEnv& env, int episodes,
                             const Rng& rng) {
  if (episodes < 1) throw ConfigError("need at least one evaluation episode");
  std::vector<double> totals;
  totals.reserve(static_cast<size_t>(episodes));
  for (int ep = 0; ep < episodes; ++ep) {
    Rng ep_rng = rng.substream(static_cast<uint64_t>(ep));
    Observation obs = env.reset();
    policy.begin_episode(env, ep_rng);
    bool done = false;
    while (!done) {
      Action a = policy.act(obs, env, ep_rng);
      TradingEnv::StepResult sr = env.step(a);
      obs = sr.obs;
      done = sr.done;
    }
    totals.push_back(env.episode_total());
  }
  return totals;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("mean of an empty list");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace solarlab
