#include "solarlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "solarlab/errors.hpp"

namespace solarlab {

const char* balance_timing_name(BalanceTiming t) {
  switch (t) {
    case BalanceTiming::Pre: return "pre";
    case BalanceTiming::Post: return "post";
    default: return "delta";
  }
}

BalanceTiming balance_timing_from_name(const std::string& name) {
  if (name == "pre") return BalanceTiming::Pre;
  if (name == "post") return BalanceTiming::Post;
  if (name == "delta") return BalanceTiming::Delta;
  throw ConfigError("reward balance timing must be 'pre', 'post' or 'delta', got '" +
                    name + "'");
}

const char* reward_carry_name(RewardCarry c) {
  return c == RewardCarry::LastSale ? "last_sale" : "last_step";
}

RewardCarry reward_carry_from_name(const std::string& name) {
  if (name == "last_sale") return RewardCarry::LastSale;
  if (name == "last_step") return RewardCarry::LastStep;
  throw ConfigError("reward carry must be 'last_sale' or 'last_step', got '" +
                    name + "'");
}

NormStats NormStats::fit(const Dataset& train, double storage_horizon_days) {
  if (train.empty()) throw ValidationError("cannot fit scaling on empty data");
  if (storage_horizon_days <= 0.0)
    throw ConfigError("storage horizon must be positive");
  double n = static_cast<double>(train.size());
  NormStats s;
  double psum = 0.0, gsum = 0.0;
  for (const DayRecord& r : train.days) {
    psum += r.price;
    gsum += r.generation;
  }
  s.p_mean = psum / n;
  s.g_mean = gsum / n;
  double pvar = 0.0, gvar = 0.0;
  for (const DayRecord& r : train.days) {
    pvar += (r.price - s.p_mean) * (r.price - s.p_mean);
    gvar += (r.generation - s.g_mean) * (r.generation - s.g_mean);
  }
  s.p_std = std::sqrt(pvar / n);
  s.g_std = std::sqrt(gvar / n);
  // constant series still need a usable divisor
  if (s.p_std < 1e-12) s.p_std = 1.0;
  if (s.g_std < 1e-12) s.g_std = 1.0;
  s.w_scale = std::max(s.g_mean, 1e-12) * storage_horizon_days;
  // a sale's proceeds top out near the value of the full episode's
  // generation; dividing by g_mean * p_mean * n keeps rewards O(1)
  s.r_scale = std::max(s.g_mean * s.p_mean * n, 1e-9);
  s.validate();
  return s;
}

NormStats NormStats::identity() { return NormStats{}; }

void NormStats::validate() const {
  if (!(std::isfinite(p_mean) && std::isfinite(p_std) && std::isfinite(g_mean) &&
        std::isfinite(g_std) && std::isfinite(w_scale) && std::isfinite(r_scale)))
    throw ValidationError("scaling stats must be finite");
  if (p_std <= 0.0 || g_std <= 0.0 || w_scale <= 0.0 || r_scale <= 0.0)
    throw ValidationError("scaling divisors must be positive");
}

Vector Observation::to_vector() const {
  Vector v(4);
  v << p, w, pg, r;
  return v;
}

double wattage(double vmp, double imp) {
  if (vmp < 0.0 || imp < 0.0)
    throw ValidationError("panel voltage and current must be non-negative");
  return vmp * imp;
}

double compute_reward(double prev_reward, double generated_today,
                      double balance) {
  return std::max(0.0, prev_reward - generated_today + balance);
}

TradingEnv::TradingEnv(Dataset slice, NormStats norm, BalanceTiming timing,
                       RewardCarry carry)
    : slice_(std::move(slice)), norm_(norm), timing_(timing), carry_(carry) {
  if (slice_.empty()) throw ConfigError("environment needs a non-empty slice");
  slice_.validate(false);
  norm_.validate();
}

Observation TradingEnv::observe() const {
  Observation o;
  if (cursor_ < length()) {
    const DayRecord& d = slice_.days[static_cast<size_t>(cursor_)];
    o.p = (d.price - norm_.p_mean) / norm_.p_std;
    o.pg = (d.generation - norm_.g_mean) / norm_.g_std;
  }
  o.w = stored_ / norm_.w_scale;
  o.r = prev_reward_ / norm_.r_scale;
  return o;
}

Observation TradingEnv::reset() {
  cursor_ = 0;
  stored_ = 0.0;
  balance_ = 0.0;
  prev_reward_ = 0.0;
  done_ = false;
  return observe();
}

TradingEnv::StepResult TradingEnv::step(Action action) {
  if (done_) throw ContractError("step on a finished or unreset environment");
  const DayRecord& d = slice_.days[static_cast<size_t>(cursor_)];
  stored_ += d.generation;

  bool last = cursor_ == length() - 1;
  bool sell = action == Action::Sell || (last && stored_ > 0.0);
  double reward = 0.0;
  if (sell) {
    double before = balance_;
    balance_ += stored_ * d.price;
    stored_ = 0.0;
    double basis = timing_ == BalanceTiming::Post    ? balance_
                   : timing_ == BalanceTiming::Pre   ? before
                                                     : balance_ - before;
    reward = compute_reward(prev_reward_, d.generation, basis);
  }
  if (carry_ == RewardCarry::LastStep)
    prev_reward_ = reward;
  else if (reward > 0.0)
    prev_reward_ = reward;
  if (audit_)
    audit_->push_back({cursor_, d.price, d.generation,
                       sell ? Action::Sell : Action::Hold, stored_, balance_,
                       reward});
  ++cursor_;
  done_ = cursor_ >= length();
  return {observe(), reward, done_};
}

double TradingEnv::episode_total() const {
  if (!done_) throw ContractError("episode total read before the episode ended");
  return balance_;
}

void write_audit_csv_file(const std::string& path,
                          const std::vector<AuditRow>& rows,
                          const std::vector<std::string>& metadata) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const std::string& m : metadata) os << "# " << m << "\n";
  os << "step,price,generation,action,stored,balance,reward\n";
  for (const AuditRow& r : rows)
    os << r.step << "," << format_double(r.price) << ","
       << format_double(r.generation) << ","
       << (r.action == Action::Sell ? "SELL" : "HOLD") << ","
       << format_double(r.stored) << "," << format_double(r.balance) << ","
       << format_double(r.reward) << "\n";
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace solarlab
