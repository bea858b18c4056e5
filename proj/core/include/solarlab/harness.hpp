#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "solarlab/agents.hpp"
#include "solarlab/config.hpp"
#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/forecast.hpp"

namespace solarlab {

// Published benchmark means for the five-agent protocol, shown alongside
// run results in reports. Reference display only; never asserted against
// synthetic-data runs.
inline constexpr double kReferenceMeanMoE = 14.60367;
inline constexpr double kReferenceMeanSellOnly = 14.5;
inline constexpr double kReferenceMeanRandom = 15.55;
inline constexpr double kReferenceMeanPpo30 = 16.336;
inline constexpr double kReferenceMeanPpo1000 = 21.61233;

struct EmbedReference {
  const char* label;
  int experts;
  double train_mse;
  double test_rmse;
};

// published embedding-comparison losses, same display-only role
inline constexpr EmbedReference kEmbedReferences[] = {
    {"table", 2, 7.3115, 9.6131},
    {"table_h64", 2, 85.9594, 9.0421},
    {"table_h64", 4, 96.0857, 8.3847},
    {"table_h64", 6, 98.2492, 10.7752},
    {"soliton_untuned", 6, 115.0481, 8.1353},
    {"soliton_tuned", 6, 53.7173, 5.4411},
};

struct EpisodeCounts {
  int moe = 30;
  int sell_only = 1;
  int random = 5;
  int ppo = 30;

  void validate() const;
};

struct ExperimentConfig {
  // dataset
  std::string source = "synthetic";  // synthetic | csv
  std::string solar_csv;
  std::string prices_csv;
  int synth_days = 365;
  uint64_t synth_seed = 42;
  SynthParams synth;

  // environment
  double env_test_fraction = 0.3;
  BalanceTiming timing = BalanceTiming::Delta;
  RewardCarry carry = RewardCarry::LastStep;
  double storage_horizon_days = 30.0;

  // agents
  PPOConfig ppo;
  int ppo_epochs_short = 30;
  int ppo_epochs_long = 1000;
  MoEConfig moe;
  bool moe_compare_chrono = true;

  EpisodeCounts episodes;
  uint64_t seed = 42;
  std::string out_dir = "out";

  static ExperimentConfig from_config(const Config& c);
  void validate() const;

  // the fully resolved configuration as sorted key=value text; run.out_dir
  // is excluded so the hash identifies the experiment, not where it landed
  std::string canonical() const;
  std::string config_hash() const;
};

struct AgentColumn {
  std::string name;
  std::vector<double> totals;
  double mean = 0.0;
  double reference_mean = 0.0;
};

struct EmbedCompareRow {
  std::string source;  // run | reference
  std::string embedding;
  std::string split;  // random | chrono | published
  int experts = 0;
  double train_mse_aug = 0.0;
  double train_mse_clean = 0.0;
  double test_rmse = 0.0;
};

struct ForecastAuditRow {
  int day = 0;
  double actual = 0.0;
  double predicted = 0.0;
};

struct ResultsTable {
  std::vector<AgentColumn> columns;  // MoE, SellOnly, Random, PPO-30, PPO-1000
  std::string config_hash;
  uint64_t seed = 0;
  std::string started_at;  // stdout metadata only, never written to files
  double duration_seconds = 0.0;

  Dataset dataset;
  std::vector<double> curve_short;
  std::vector<double> curve_long;
  std::vector<EmbedCompareRow> embed_rows;
  std::vector<ForecastAuditRow> forecast_audit;
};

// full protocol: data, splits, PPO short+long, forecaster, all five agents
ResultsTable run_experiment(const ExperimentConfig& cfg);

// table1.csv, table3.csv, training curves, embedding_compare.csv,
// forecast_audit.csv, dataset.csv and the three chart files
void emit_report(const ResultsTable& results, const std::string& out_dir);

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  size_t params = 0;
};

// finite-difference sweep over every architecture in the repo;
// pass iff every entry is below 1e-4
std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed);
bool gradcheck_passed(const std::vector<GradCheckResult>& results,
                      double tol = 1e-4);

void ensure_dir(const std::string& path);

}  // namespace solarlab
