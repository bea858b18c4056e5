// Acceptance gate: one pass/fail line per criterion, exit 0 iff all pass.
// Run directly or via ctest; --cli <path> points at the command-line binary
// (needed by the byte-determinism criterion), trailing numbers select a
// subset of criteria.
#include <sys/wait.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "solarlab/agents.hpp"
#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/errors.hpp"
#include "solarlab/forecast.hpp"
#include "solarlab/harness.hpp"
#include "solarlab/nn.hpp"
#include "solarlab/rng.hpp"
#include "support.hpp"

using namespace solarlab;

namespace {

std::string g_cli_path;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---- 1: finite-difference gradient sweep over every architecture ----
bool crit_gradcheck(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckResult> results = run_gradcheck_suite(42);
  double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name = "-";
  for (const GradCheckResult& r : results)
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = r.name;
    }
  bool ok = gradcheck_passed(results, 1e-4) && elapsed < 60.0;
  detail = fmt("%zu components, worst rel err %.2e (%s), %.1fs (limit 60s)",
               results.size(), worst, worst_name.c_str(), elapsed);
  return ok;
}

// ---- 2: advantage recursion against the quadratic double sum ----
bool crit_gae_oracle(std::string& detail) {
  Rng rng(202);
  std::vector<std::vector<double>> all_r, all_v;
  std::vector<std::vector<uint8_t>> all_d;
  std::vector<std::pair<double, double>> gl;
  for (int ep = 0; ep < 100; ++ep) {
    int n = 1 + rng.uniform_int(50);
    std::vector<double> r(n), v(n);
    std::vector<uint8_t> dn(n, 0);
    for (int i = 0; i < n; ++i) {
      r[i] = rng.normal(0.0, 2.0);
      v[i] = rng.normal(0.0, 1.0);
      if (rng.uniform() < 0.1) dn[i] = 1;
    }
    dn[n - 1] = 1;
    all_r.push_back(std::move(r));
    all_v.push_back(std::move(v));
    all_d.push_back(std::move(dn));
    gl.push_back({rng.uniform(0.5, 0.999), rng.uniform(0.5, 0.999)});
  }

  auto t0 = std::chrono::steady_clock::now();
  std::vector<GaeResult> fast(100);
  for (int ep = 0; ep < 100; ++ep)
    fast[ep] = gae(all_r[ep], all_v[ep], all_d[ep], gl[ep].first, gl[ep].second);
  double elapsed = seconds_since(t0);

  double worst = 0.0;
  for (int ep = 0; ep < 100; ++ep) {
    testsupport::GaeOracleResult want = testsupport::gae_double_sum(
        all_r[ep], all_v[ep], all_d[ep], gl[ep].first, gl[ep].second);
    for (size_t i = 0; i < want.adv.size(); ++i) {
      worst = std::max(worst, std::abs(fast[ep].advantages[i] - want.adv[i]));
      worst = std::max(worst, std::abs(fast[ep].returns[i] - want.ret[i]));
    }
  }
  bool ok = worst <= 1e-10 && elapsed < 1.0;
  detail = fmt("100 episodes, worst abs err %.2e (limit 1e-10), sweep %.3fs "
               "(limit 1s)",
               worst, elapsed);
  return ok;
}

// ---- 3: clipped surrogate corner cases, exact ----
bool crit_clip_exact(std::string& detail) {
  bool ok = clipped_surrogate(1.0, 0.37, 0.2) == 0.37 &&
            clipped_surrogate(1.5, 1.0, 0.2) == 1.2 &&
            clipped_surrogate(0.5, -1.0, 0.2) == -0.8;
  detail = "unclipped ratio, upper clip, lower clip all bit-exact";
  return ok;
}

// ---- 4: environment conservation over random action sequences ----
bool crit_env_conservation(std::string& detail) {
  Rng rng(404);
  int sequences = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 1 + rng.uniform_int(20);
    std::vector<std::pair<double, double>> rows;
    for (int i = 0; i < n; ++i)
      rows.push_back({0.01 + rng.uniform(0.0, 30.0), rng.uniform(0.0, 50.0)});
    Dataset d = testsupport::make_dataset(rows);
    BalanceTiming timing = static_cast<BalanceTiming>(rng.uniform_int(3));
    RewardCarry carry = static_cast<RewardCarry>(rng.uniform_int(2));
    TradingEnv env(d, NormStats::identity(), timing, carry);
    env.reset();

    // scalar shadow model; the sale rule mirrors the forced liquidation
    double stored = 0.0, generated = 0.0, sold = 0.0, prev_balance = 0.0;
    for (int t = 0; t < n; ++t) {
      Action a = rng.uniform_int(2) == 0 ? Action::Hold : Action::Sell;
      auto res = env.step(a);
      stored += d[t].generation;
      generated += d[t].generation;
      bool sells = a == Action::Sell || (t == n - 1 && stored > 0.0);
      if (sells) {
        sold += stored;
        stored = 0.0;
      }
      if (env.stored() < 0.0) {
        detail = "storage went negative";
        return false;
      }
      if (env.stored() != stored) {
        detail = "storage diverged from the shadow model";
        return false;
      }
      if (env.balance() < prev_balance) {
        detail = "balance decreased";
        return false;
      }
      if (res.reward < 0.0) {
        detail = "negative reward";
        return false;
      }
      if (!sells && res.reward != 0.0) {
        detail = "nonzero reward without a sale";
        return false;
      }
      prev_balance = env.balance();
    }
    if (env.stored() != 0.0) {
      detail = "episode ended with stored energy";
      return false;
    }
    if (std::abs(sold - generated) > 1e-9) {
      detail = fmt("sold %.12g != generated %.12g", sold, generated);
      return false;
    }
    ++sequences;
  }
  detail = fmt("%d sequences: storage >= 0, balance monotone, terminal "
               "storage 0, energy conserved, rewards sparse and >= 0",
               sequences);
  return true;
}

// ---- 5: no agent beats exhaustive enumeration ----
bool crit_no_agent_beats_optimum(std::string& detail) {
  Rng rng(505);
  double worst_slack = -1e300;
  for (int slice_i = 0; slice_i < 20; ++slice_i) {
    int n = 2 + rng.uniform_int(14);  // 2..15 days
    std::vector<std::pair<double, double>> rows;
    for (int i = 0; i < n; ++i)
      rows.push_back({0.01 + rng.uniform(0.0, 25.0), rng.uniform(0.0, 40.0)});
    Dataset d = testsupport::make_dataset(rows);
    double opt = testsupport::enumerate_optimum(d);

    NormStats norm = NormStats::fit(d);
    TradingEnv env(d, norm);

    double sell_only = testsupport::sell_only_total(d);
    SellOnlyPolicy sp;
    std::vector<double> sell_totals = evaluate(sp, env, 1, rng.substream(1));
    if (std::abs(sell_totals[0] - sell_only) > 1e-9) {
      detail = fmt("sell-only total %.12g != price-weighted sum %.12g",
                   sell_totals[0], sell_only);
      return false;
    }

    PPOConfig pcfg;
    pcfg.actor_hidden = {16, 16};
    pcfg.critic_hidden = {16};
    Rng prng = rng.substream(2);
    PpoAgent agent = PpoAgent::make(pcfg, norm, prng);
    PpoPolicy ppo(agent, false);

    MoEConfig mcfg;
    mcfg.dim = 8;
    mcfg.experts = 3;
    mcfg.topk = 2;
    mcfg.expert_hidden = 8;
    mcfg.embed_hidden = 8;
    Rng mrng = rng.substream(3);
    MoEModel model = MoEModel::make(mcfg, mrng);
    BestDayPolicy best(model);

    RandomPolicy rp;
    std::vector<Policy*> agents = {&sp, &rp, &ppo, &best};
    for (size_t ai = 0; ai < agents.size(); ++ai) {
      std::vector<double> totals =
          evaluate(*agents[ai], env, 3, rng.substream(10 + ai));
      for (double t : totals) {
        worst_slack = std::max(worst_slack, t - opt);
        if (t > opt + 1e-9) {
          detail = fmt("agent %zu total %.12g beat optimum %.12g", ai, t, opt);
          return false;
        }
      }
    }
  }
  detail = fmt("20 slices, 4 agents: all totals <= enumerated optimum "
               "(worst slack %.2e)",
               worst_slack);
  return true;
}

// ---- 6: trained long-run beats sell-only by 10%% and the short run ----
bool crit_ppo_beats_sell_only(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  Dataset data = synth_dataset(365, 42);
  auto [train, test] = split_chronological(data, 0.3);
  NormStats norm = NormStats::fit(train);

  TradingEnv env_test(test, norm);
  SellOnlyPolicy sp;
  double sell_base = evaluate(sp, env_test, 1, Rng(6001))[0];

  int passed = 0;
  std::ostringstream per_seed;
  for (uint64_t seed : {uint64_t{42}, uint64_t{43}, uint64_t{44}}) {
    TradingEnv env_train(train, norm);
    PPOConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 1000;
    TrainPpoResult long_run = train_ppo(env_train, cfg, norm);
    cfg.epochs = 30;
    TrainPpoResult short_run = train_ppo(env_train, cfg, norm);

    PpoPolicy long_pol(long_run.agent, false);
    PpoPolicy short_pol(short_run.agent, false);
    double mean_long =
        mean_of(evaluate(long_pol, env_test, 30, Rng(seed).substream(100)));
    double mean_short =
        mean_of(evaluate(short_pol, env_test, 30, Rng(seed).substream(101)));

    bool seed_ok = mean_long >= 1.10 * sell_base && mean_long >= mean_short;
    if (seed_ok) ++passed;
    per_seed << " seed " << seed << ": long " << fmt("%.1f", mean_long)
             << " short " << fmt("%.1f", mean_short)
             << (seed_ok ? " ok" : " MISS");
  }
  double elapsed = seconds_since(t0);
  bool ok = passed >= 2 && elapsed < 600.0;
  detail = fmt("sell-only %.1f, need >= %.1f;%s; %d/3 seeds (need 2), %.0fs "
               "(limit 600s)",
               sell_base, 1.10 * sell_base, per_seed.str().c_str(), passed,
               elapsed);
  return ok;
}

// ---- 7: wave-packet embedding beats the lookup table on held-out RMSE ----
bool crit_embedding_beats_table(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  Dataset data = synth_dataset(365, 42);

  std::ostringstream lines;
  bool asserted_ok = false;
  for (uint64_t seed : {uint64_t{42}, uint64_t{43}, uint64_t{44}}) {
    MoEConfig cfg;  // identical budget for both embeddings
    cfg.seed = seed;
    cfg.embedding = EmbeddingKind::Soliton;
    MoETrainResult sol = train_moe(data, cfg);
    cfg.embedding = EmbeddingKind::Table;
    MoETrainResult tab = train_moe(data, cfg);
    bool lower = sol.metrics.test_rmse <= tab.metrics.test_rmse;
    if (seed == 42) asserted_ok = lower;
    lines << fmt(" seed %llu: soliton %.3f vs table %.3f%s",
                 static_cast<unsigned long long>(seed), sol.metrics.test_rmse,
                 tab.metrics.test_rmse,
                 seed == 42 ? (lower ? " ok" : " MISS") : " (reported)");
  }
  double elapsed = seconds_since(t0);
  bool ok = asserted_ok && elapsed < 300.0;
  detail = fmt("held-out rmse;%s; %.0fs (limit 300s)", lines.str().c_str(),
               elapsed);
  return ok;
}

// ---- 8: gate sparsity and zero-update for unselected experts ----
bool crit_gate_sparsity(std::string& detail) {
  Rng rng(808);
  for (int i = 0; i < 1000; ++i) {
    int e_count = 2 + rng.uniform_int(7);
    int k = 1 + rng.uniform_int(e_count);
    Vector logits(e_count);
    for (int j = 0; j < e_count; ++j) logits[j] = rng.normal(0.0, 3.0);
    TopK top = gate_topk(logits, k);
    int nonzero = 0;
    double sum = 0.0;
    for (int j = 0; j < e_count; ++j) {
      if (top.weights[j] != 0.0) ++nonzero;
      sum += top.weights[j];
    }
    if (nonzero != k) {
      detail = fmt("expected exactly %d nonzero weights, got %d", k, nonzero);
      return false;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      detail = fmt("weights sum to %.12g", sum);
      return false;
    }
  }

  // one real gradient step must leave unselected experts byte-identical
  MoEConfig cfg;
  cfg.dim = 16;
  cfg.experts = 6;
  cfg.topk = 2;
  cfg.expert_hidden = 8;
  cfg.embed_hidden = 8;
  Rng mrng(809);
  MoEModel m = MoEModel::make(cfg, mrng);
  std::vector<MlpParams> before = m.experts;

  Vector emb = soliton_embed(123.0, m.soliton);
  TopK top = gate_topk(mlp_forward(m.gate, emb), m.topk);
  MoEGrads g = MoEGrads::zeros_like(m);
  moe_backward(m, 123.0, 42.0, g);
  for (size_t j = 0; j < m.experts.size(); ++j) {
    AdamState opt = AdamState::init(m.experts[j], 1e-3);
    adam_step(m.experts[j], g.experts[j], opt);
  }
  for (size_t j = 0; j < m.experts.size(); ++j) {
    bool selected =
        std::find(top.idx.begin(), top.idx.end(), static_cast<int>(j)) !=
        top.idx.end();
    bool changed = false;
    for (size_t li = 0; li < before[j].layers.size(); ++li)
      if ((before[j].layers[li].w - m.experts[j].layers[li].w)
                  .cwiseAbs()
                  .maxCoeff() != 0.0 ||
          (before[j].layers[li].b - m.experts[j].layers[li].b)
                  .cwiseAbs()
                  .maxCoeff() != 0.0)
        changed = true;
    if (selected && !changed) {
      detail = fmt("selected expert %zu did not move", j);
      return false;
    }
    if (!selected && changed) {
      detail = fmt("unselected expert %zu moved", j);
      return false;
    }
  }
  detail = "1000 gates: exactly k nonzero, sum 1; one update moved only the "
           "selected experts";
  return true;
}

// ---- 9: identical seeds give byte-identical report files via the CLI ----
bool crit_cli_determinism(std::string& detail) {
  if (g_cli_path.empty()) {
    detail = "no --cli path provided";
    return false;
  }
  testsupport::TempDir td("accept9");
  auto run_once = [&](const std::string& out) {
    std::string cmd = g_cli_path + " experiment --seed 42 -o " + out +
                      " --set dataset.days=365"
                      " --set ppo.epochs_short=2 --set ppo.epochs_long=3"
                      " --set ppo.actor_hidden=8,8 --set ppo.critic_hidden=8"
                      " --set ppo.minibatch=8"
                      " --set moe.dim=6 --set moe.experts=2 --set moe.topk=1"
                      " --set moe.expert_hidden=6 --set moe.embed_hidden=6"
                      " --set moe.epochs=4 --set moe.minibatch=8"
                      " --set eval.moe_episodes=2 --set eval.random_episodes=2"
                      " --set eval.ppo_episodes=2"
                      " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status) == 0;
  };
  std::string out1 = td.path("r1"), out2 = td.path("r2");
  if (!run_once(out1) || !run_once(out2)) {
    detail = "experiment run failed";
    return false;
  }

  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(out1))
    names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.size() < 10) {
    detail = fmt("only %zu report files", names.size());
    return false;
  }
  for (const std::string& name : names) {
    std::string a = testsupport::read_file(out1 + "/" + name);
    std::string b = testsupport::read_file(out2 + "/" + name);
    if (a.empty() || a != b) {
      detail = "mismatch in " + name;
      return false;
    }
  }
  detail = fmt("%zu report files byte-identical across two runs", names.size());
  return true;
}

// ---- 10: day augmentation stays inside the day with the right mean ----
bool crit_augmentation(std::string& detail) {
  Rng rng(1010);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    int day = rng.uniform_int(366);
    double x = augment_long(day, rng);
    if (x < day || x >= day + 0.99) {
      detail = fmt("draw %d: %.12g outside [%d, %d + 0.99)", i, x, day, day);
      return false;
    }
    sum += x - day;
  }
  double mean = sum / n;
  bool ok = std::abs(mean - 0.495) <= 0.005;
  detail = fmt("100000 draws in range, mean offset %.4f (want 0.495 +- 0.005)",
               mean);
  return ok;
}

struct Criterion {
  int id;
  const char* title;
  std::function<bool(std::string&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--cli" && i + 1 < argc) {
      g_cli_path = argv[++i];
    } else if (!arg.empty() &&
               std::all_of(arg.begin(), arg.end(),
                           [](unsigned char c) { return std::isdigit(c); })) {
      wanted.insert(std::atoi(arg.c_str()));
    } else {
      std::fprintf(stderr, "usage: %s [--cli PATH] [criterion numbers]\n",
                   argv[0]);
      return 1;
    }
  }

  std::vector<Criterion> criteria = {
      {1, "gradient checks across all architectures", crit_gradcheck},
      {2, "advantage estimator matches the double-sum oracle", crit_gae_oracle},
      {3, "surrogate clipping corner cases are exact", crit_clip_exact},
      {4, "environment conserves energy and money", crit_env_conservation},
      {5, "no agent beats the enumerated optimum", crit_no_agent_beats_optimum},
      {6, "long training beats sell-only by 10% on 2 of 3 seeds",
       crit_ppo_beats_sell_only},
      {7, "wave-packet embedding beats the table on held-out rmse",
       crit_embedding_beats_table},
      {8, "gate is exactly top-k sparse end to end", crit_gate_sparsity},
      {9, "report files are byte-identical for a fixed seed",
       crit_cli_determinism},
      {10, "training-time day augmentation is well distributed",
       crit_augmentation},
  };

  int failures = 0, ran = 0;
  for (const Criterion& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    ++ran;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] criterion %d: %s -- %s\n", ok ? "PASS" : "FAIL", c.id,
                c.title, detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
