#pragma once

// independent reference implementations used as oracles, deliberately
// written as plain loops with no shared code with the library

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/nn.hpp"

namespace testsupport {

// dense forward pass as explicit scalar loops
inline std::vector<double> loop_forward(const solarlab::MlpParams& p,
                                        const std::vector<double>& input) {
  std::vector<double> cur = input;
  for (const solarlab::Layer& layer : p.layers) {
    std::vector<double> next(static_cast<size_t>(layer.w.rows()), 0.0);
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
      double acc = layer.b[r];
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        acc += layer.w(r, c) * cur[static_cast<size_t>(c)];
      double v = acc;
      if (layer.act == solarlab::Activation::Tanh) v = std::tanh(acc);
      if (layer.act == solarlab::Activation::Relu) v = acc > 0.0 ? acc : 0.0;
      next[static_cast<size_t>(r)] = v;
    }
    cur = std::move(next);
  }
  return cur;
}

// O(T^2) double-sum advantage oracle:
//   adv_t = sum_{l >= 0} (gamma*lambda)^l delta_{t+l},
// cut at episode boundaries (done flags) exactly like the recursion
struct GaeOracleResult {
  std::vector<double> adv;
  std::vector<double> ret;
};

inline GaeOracleResult gae_double_sum(const std::vector<double>& rewards,
                                      const std::vector<double>& values,
                                      const std::vector<uint8_t>& dones,
                                      double gamma, double lambda) {
  size_t n = rewards.size();
  std::vector<double> delta(n);
  for (size_t t = 0; t < n; ++t) {
    double next_v = (t + 1 < n && !dones[t]) ? values[t + 1] : 0.0;
    delta[t] = rewards[t] + gamma * next_v - values[t];
  }
  GaeOracleResult out;
  out.adv.resize(n);
  out.ret.resize(n);
  for (size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    double w = 1.0;
    for (size_t l = t; l < n; ++l) {
      acc += w * delta[l];
      if (dones[l]) break;
      w *= gamma * lambda;
    }
    out.adv[t] = acc;
    out.ret[t] = acc + values[t];
  }
  return out;
}

// scalar Adam recurrence, bias-corrected, run independently
struct ScalarAdam {
  double lr = 1e-3;
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
  double m = 0.0;
  double v = 0.0;
  long long t = 0;

  double update(double w, double g) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return w - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

inline solarlab::Dataset make_dataset(
    const std::vector<std::pair<double, double>>& price_gen) {
  solarlab::Dataset d;
  d.provenance = solarlab::Provenance::Synthetic;
  for (size_t i = 0; i < price_gen.size(); ++i)
    d.days.push_back({static_cast<int>(i), price_gen[i].first,
                      price_gen[i].second});
  return d;
}

// best achievable episode total: every action sequence, through the real env
inline double enumerate_optimum(
    const solarlab::Dataset& slice,
    solarlab::BalanceTiming timing = solarlab::BalanceTiming::Post) {
  int n = static_cast<int>(slice.size());
  solarlab::TradingEnv env(slice, solarlab::NormStats::identity(), timing);
  double best = -1.0;
  for (uint64_t mask = 0; mask < (1ull << n); ++mask) {
    env.reset();
    for (int t = 0; t < n; ++t)
      env.step((mask >> t) & 1 ? solarlab::Action::Sell
                               : solarlab::Action::Hold);
    best = std::max(best, env.episode_total());
  }
  return best;
}

// closed form for the sell-every-day policy
inline double sell_only_total(const solarlab::Dataset& slice) {
  double total = 0.0;
  for (const solarlab::DayRecord& d : slice.days)
    total += d.generation * d.price;
  return total;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("solarlab_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::string path(const std::string& name) const {
    return (dir_ / name).string();
  }
  std::string root() const { return dir_.string(); }

 private:
  std::filesystem::path dir_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::string out((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  return out;
}

}  // namespace testsupport
