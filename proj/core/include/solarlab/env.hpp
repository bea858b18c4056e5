#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "solarlab/dataio.hpp"
#include "solarlab/nn.hpp"

namespace solarlab {

enum class Action : int { Hold = 0, Sell = 1 };

// which balance value the recurrent reward sees on a sale step:
//   pre   - account balance before the sale's proceeds land
//   post  - account balance after they land
//   delta - just this sale's proceeds (stored wattage x today's price)
// pre/post compound across the whole episode, which makes selling every day
// reward-dominant no matter what prices do; delta is the default because it
// is the only reading under which sale timing changes the reward ordering
enum class BalanceTiming : uint8_t { Pre = 0, Post = 1, Delta = 2 };

const char* balance_timing_name(BalanceTiming t);
BalanceTiming balance_timing_from_name(const std::string& name);

// what prev_reward carries into the next step's reward and observation:
//   last_sale - the most recent nonzero reward, held across hold-gaps
//   last_step - literally the previous step's reward (zero after any hold)
// last_sale chains every sale into every later reward, which again favors
// frequent selling; last_step only chains back-to-back sales, so isolated
// sales are judged on their own proceeds. last_step is the default
enum class RewardCarry : uint8_t { LastSale = 0, LastStep = 1 };

const char* reward_carry_name(RewardCarry c);
RewardCarry reward_carry_from_name(const std::string& name);

// Observation scaling fitted on the train split only. Price and generation
// are standardized; storage is divided by a horizon's worth of mean
// generation; the recurrent reward is divided by r_scale, which also scales
// rewards handed to the learner. A single sale's proceeds are bounded by the
// value of the whole episode's generation, so r_scale is sized to that.
struct NormStats {
  double p_mean = 0.0;
  double p_std = 1.0;
  double g_mean = 0.0;
  double g_std = 1.0;
  double w_scale = 1.0;
  double r_scale = 1.0;

  static NormStats fit(const Dataset& train, double storage_horizon_days = 30.0);
  static NormStats identity();
  void validate() const;
};

struct Observation {
  double p = 0.0;   // normalized price
  double w = 0.0;   // normalized stored wattage
  double pg = 0.0;  // normalized generation today
  double r = 0.0;   // previous (nonzero) reward, scaled

  Vector to_vector() const;
};

// direct product of panel voltage and current
double wattage(double vmp, double imp);

// recurrent sparse reward: max(0, prev_reward - generated_today + balance);
// the caller picks which balance figure goes in (see BalanceTiming)
double compute_reward(double prev_reward, double generated_today, double balance);

struct AuditRow {
  int step = 0;
  double price = 0.0;
  double generation = 0.0;
  Action action = Action::Hold;  // effective action after forced liquidation
  double stored = 0.0;
  double balance = 0.0;
  double reward = 0.0;
};

// One step per day over a dataset slice. Generation lands in storage
// before the action resolves, a sell liquidates all storage at today's
// price, and a hold on the final day is overridden by forced liquidation.
// The environment itself is deterministic.
class TradingEnv {
 public:
  TradingEnv(Dataset slice, NormStats norm,
             BalanceTiming timing = BalanceTiming::Delta,
             RewardCarry carry = RewardCarry::LastStep);

  Observation reset();

  struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
  };
  StepResult step(Action action);

  bool done() const { return done_; }
  // final balance; calling before the episode ends is a contract violation
  double episode_total() const;

  int length() const { return static_cast<int>(slice_.size()); }
  int cursor() const { return cursor_; }
  double stored() const { return stored_; }
  double balance() const { return balance_; }
  double prev_reward() const { return prev_reward_; }
  const Dataset& data() const { return slice_; }
  const NormStats& norm() const { return norm_; }
  BalanceTiming timing() const { return timing_; }
  RewardCarry carry() const { return carry_; }

  // optional trace sink; rows record the effective action taken
  void set_audit(std::vector<AuditRow>* sink) { audit_ = sink; }

 private:
  Observation observe() const;

  Dataset slice_;
  NormStats norm_;
  BalanceTiming timing_;
  RewardCarry carry_;
  std::vector<AuditRow>* audit_ = nullptr;
  int cursor_ = 0;
  double stored_ = 0.0;
  double balance_ = 0.0;
  double prev_reward_ = 0.0;
  bool done_ = true;  // must reset() before stepping
};

void write_audit_csv_file(const std::string& path,
                          const std::vector<AuditRow>& rows,
                          const std::vector<std::string>& metadata = {});

}  // namespace solarlab
