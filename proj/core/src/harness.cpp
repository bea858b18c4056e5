#include "solarlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "solarlab/errors.hpp"
#include "solarlab/report.hpp"

namespace solarlab {

namespace {

// rethrows with the failing stage's name prefixed, preserving the type so
// exit-code mapping still works
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  auto tag = [&](const std::exception& e) {
    return std::string(name) + ": " + e.what();
  };
  try {
    return f();
  } catch (const IoError& e) {
    throw IoError(tag(e));
  } catch (const ParseError& e) {
    throw ParseError(tag(e));
  } catch (const ValidationError& e) {
    throw ValidationError(tag(e));
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const ContractError& e) {
    throw ContractError(tag(e));
  } catch (const std::exception& e) {
    throw std::runtime_error(tag(e));
  }
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, ',')) {
    try {
      size_t pos = 0;
      int v = std::stoi(cur, &pos);
      if (pos != cur.size()) throw std::invalid_argument("junk");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' needs a comma list of ints");
    }
  }
  if (out.empty())
    throw ConfigError("config key '" + key + "' needs at least one value");
  return out;
}

std::string join_int_list(const std::vector<int>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset.source", "dataset.solar_csv", "dataset.prices_csv",
      "dataset.days", "dataset.seed", "dataset.price_base",
      "dataset.price_amplitude", "dataset.price_noise",
      "dataset.gen_amplitude", "dataset.gen_noise",
      "env.test_fraction", "env.reward_balance_timing", "env.reward_carry",
      "env.storage_horizon_days",
      "ppo.gamma", "ppo.lambda", "ppo.clip_eps", "ppo.update_passes",
      "ppo.minibatch", "ppo.lr_actor", "ppo.lr_critic", "ppo.entropy_coef",
      "ppo.normalize_advantages", "ppo.sell_transitions_only", "ppo.gae_form",
      "ppo.actor_hidden", "ppo.critic_hidden", "ppo.epochs_short",
      "ppo.epochs_long",
      "moe.embedding", "moe.dim", "moe.experts", "moe.topk",
      "moe.expert_hidden", "moe.embed_hidden", "moe.epochs", "moe.minibatch",
      "moe.lr", "moe.augment", "moe.tail", "moe.kernel", "moe.test_fraction",
      "moe.importance_coef", "moe.compare_chrono",
      "eval.moe_episodes", "eval.sell_only_episodes", "eval.random_episodes",
      "eval.ppo_episodes",
      "run.seed", "run.out_dir",
  };
  return keys;
}

std::vector<std::string> file_metadata(const ResultsTable& r) {
  return {"config_hash=" + r.config_hash, "seed=" + std::to_string(r.seed)};
}

std::string now_string() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace

void EpisodeCounts::validate() const {
  if (moe < 1 || sell_only < 1 || random < 1 || ppo < 1)
    throw ConfigError("episode counts must be positive");
}

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  for (const std::string& k : c.keys())
    if (!known_keys().count(k))
      throw ConfigError("unknown config key '" + k + "'");

  ExperimentConfig e;
  e.source = c.get_string("dataset.source", e.source);
  e.solar_csv = c.get_string("dataset.solar_csv", e.solar_csv);
  e.prices_csv = c.get_string("dataset.prices_csv", e.prices_csv);
  e.synth_days = c.get_int("dataset.days", e.synth_days);
  e.synth_seed = c.get_u64("dataset.seed", e.synth_seed);
  e.synth.price_base = c.get_double("dataset.price_base", e.synth.price_base);
  e.synth.price_amplitude =
      c.get_double("dataset.price_amplitude", e.synth.price_amplitude);
  e.synth.price_noise = c.get_double("dataset.price_noise", e.synth.price_noise);
  e.synth.gen_amplitude =
      c.get_double("dataset.gen_amplitude", e.synth.gen_amplitude);
  e.synth.gen_noise = c.get_double("dataset.gen_noise", e.synth.gen_noise);

  e.env_test_fraction = c.get_double("env.test_fraction", e.env_test_fraction);
  e.timing = balance_timing_from_name(
      c.get_string("env.reward_balance_timing", balance_timing_name(e.timing)));
  e.carry = reward_carry_from_name(
      c.get_string("env.reward_carry", reward_carry_name(e.carry)));
  e.storage_horizon_days =
      c.get_double("env.storage_horizon_days", e.storage_horizon_days);

  e.ppo.gamma = c.get_double("ppo.gamma", e.ppo.gamma);
  e.ppo.lambda = c.get_double("ppo.lambda", e.ppo.lambda);
  e.ppo.clip_eps = c.get_double("ppo.clip_eps", e.ppo.clip_eps);
  e.ppo.update_passes = c.get_int("ppo.update_passes", e.ppo.update_passes);
  e.ppo.minibatch = c.get_int("ppo.minibatch", e.ppo.minibatch);
  e.ppo.lr_actor = c.get_double("ppo.lr_actor", e.ppo.lr_actor);
  e.ppo.lr_critic = c.get_double("ppo.lr_critic", e.ppo.lr_critic);
  e.ppo.entropy_coef = c.get_double("ppo.entropy_coef", e.ppo.entropy_coef);
  e.ppo.normalize_advantages =
      c.get_bool("ppo.normalize_advantages", e.ppo.normalize_advantages);
  e.ppo.sell_transitions_only =
      c.get_bool("ppo.sell_transitions_only", e.ppo.sell_transitions_only);
  e.ppo.gae_form = gae_form_from_name(
      c.get_string("ppo.gae_form", gae_form_name(e.ppo.gae_form)));
  if (c.has("ppo.actor_hidden"))
    e.ppo.actor_hidden =
        parse_int_list(c.get_string("ppo.actor_hidden", ""), "ppo.actor_hidden");
  if (c.has("ppo.critic_hidden"))
    e.ppo.critic_hidden = parse_int_list(c.get_string("ppo.critic_hidden", ""),
                                         "ppo.critic_hidden");
  e.ppo_epochs_short = c.get_int("ppo.epochs_short", e.ppo_epochs_short);
  e.ppo_epochs_long = c.get_int("ppo.epochs_long", e.ppo_epochs_long);

  e.moe.embedding = embedding_kind_from_name(
      c.get_string("moe.embedding", embedding_kind_name(e.moe.embedding)));
  e.moe.dim = c.get_int("moe.dim", e.moe.dim);
  e.moe.experts = c.get_int("moe.experts", e.moe.experts);
  e.moe.topk = c.get_int("moe.topk", e.moe.topk);
  e.moe.expert_hidden = c.get_int("moe.expert_hidden", e.moe.expert_hidden);
  e.moe.embed_hidden = c.get_int("moe.embed_hidden", e.moe.embed_hidden);
  e.moe.epochs = c.get_int("moe.epochs", e.moe.epochs);
  e.moe.minibatch = c.get_int("moe.minibatch", e.moe.minibatch);
  e.moe.lr = c.get_double("moe.lr", e.moe.lr);
  e.moe.augment = c.get_bool("moe.augment", e.moe.augment);
  e.moe.tail = soliton_tail_from_name(
      c.get_string("moe.tail", soliton_tail_name(e.moe.tail)));
  e.moe.kernel = soliton_kernel_from_name(
      c.get_string("moe.kernel", soliton_kernel_name(e.moe.kernel)));
  e.moe.test_fraction = c.get_double("moe.test_fraction", e.moe.test_fraction);
  e.moe.importance_coef =
      c.get_double("moe.importance_coef", e.moe.importance_coef);
  e.moe_compare_chrono = c.get_bool("moe.compare_chrono", e.moe_compare_chrono);

  e.episodes.moe = c.get_int("eval.moe_episodes", e.episodes.moe);
  e.episodes.sell_only =
      c.get_int("eval.sell_only_episodes", e.episodes.sell_only);
  e.episodes.random = c.get_int("eval.random_episodes", e.episodes.random);
  e.episodes.ppo = c.get_int("eval.ppo_episodes", e.episodes.ppo);

  e.seed = c.get_u64("run.seed", e.seed);
  e.out_dir = c.get_string("run.out_dir", e.out_dir);
  return e;
}

void ExperimentConfig::validate() const {
  if (source != "synthetic" && source != "csv")
    throw ConfigError("dataset source must be 'synthetic' or 'csv'");
  if (source == "csv") {
    if (solar_csv.empty() || prices_csv.empty())
      throw ConfigError("csv source needs dataset.solar_csv and dataset.prices_csv");
    if (!std::filesystem::exists(solar_csv))
      throw ConfigError("solar csv does not exist: " + solar_csv);
    if (!std::filesystem::exists(prices_csv))
      throw ConfigError("prices csv does not exist: " + prices_csv);
  } else {
    if (synth_days < 10) throw ConfigError("synthetic dataset needs >= 10 days");
    synth.validate();
  }
  if (!(env_test_fraction > 0.0 && env_test_fraction < 1.0))
    throw ConfigError("env test fraction must be in (0, 1)");
  if (storage_horizon_days <= 0.0)
    throw ConfigError("storage horizon must be positive");
  ppo.validate();
  if (ppo_epochs_short < 0 || ppo_epochs_long < 0)
    throw ConfigError("epoch counts must be non-negative");
  moe.validate();
  episodes.validate();
  if (out_dir.empty()) throw ConfigError("output directory must not be empty");
}

std::string ExperimentConfig::canonical() const {
  Config c;
  c.set("dataset.source", source);
  c.set("dataset.solar_csv", solar_csv.empty() ? "-" : solar_csv);
  c.set("dataset.prices_csv", prices_csv.empty() ? "-" : prices_csv);
  c.set("dataset.days", std::to_string(synth_days));
  c.set("dataset.seed", std::to_string(synth_seed));
  c.set("dataset.price_base", format_double(synth.price_base));
  c.set("dataset.price_amplitude", format_double(synth.price_amplitude));
  c.set("dataset.price_noise", format_double(synth.price_noise));
  c.set("dataset.gen_amplitude", format_double(synth.gen_amplitude));
  c.set("dataset.gen_noise", format_double(synth.gen_noise));
  c.set("env.test_fraction", format_double(env_test_fraction));
  c.set("env.reward_balance_timing", balance_timing_name(timing));
  c.set("env.reward_carry", reward_carry_name(carry));
  c.set("env.storage_horizon_days", format_double(storage_horizon_days));
  c.set("ppo.gamma", format_double(ppo.gamma));
  c.set("ppo.lambda", format_double(ppo.lambda));
  c.set("ppo.clip_eps", format_double(ppo.clip_eps));
  c.set("ppo.update_passes", std::to_string(ppo.update_passes));
  c.set("ppo.minibatch", std::to_string(ppo.minibatch));
  c.set("ppo.lr_actor", format_double(ppo.lr_actor));
  c.set("ppo.lr_critic", format_double(ppo.lr_critic));
  c.set("ppo.entropy_coef", format_double(ppo.entropy_coef));
  c.set("ppo.normalize_advantages", ppo.normalize_advantages ? "true" : "false");
  c.set("ppo.sell_transitions_only",
        ppo.sell_transitions_only ? "true" : "false");
  c.set("ppo.gae_form", gae_form_name(ppo.gae_form));
  c.set("ppo.actor_hidden", join_int_list(ppo.actor_hidden));
  c.set("ppo.critic_hidden", join_int_list(ppo.critic_hidden));
  c.set("ppo.epochs_short", std::to_string(ppo_epochs_short));
  c.set("ppo.epochs_long", std::to_string(ppo_epochs_long));
  c.set("moe.embedding", embedding_kind_name(moe.embedding));
  c.set("moe.dim", std::to_string(moe.dim));
  c.set("moe.experts", std::to_string(moe.experts));
  c.set("moe.topk", std::to_string(moe.topk));
  c.set("moe.expert_hidden", std::to_string(moe.expert_hidden));
  c.set("moe.embed_hidden", std::to_string(moe.embed_hidden));
  c.set("moe.epochs", std::to_string(moe.epochs));
  c.set("moe.minibatch", std::to_string(moe.minibatch));
  c.set("moe.lr", format_double(moe.lr));
  c.set("moe.augment", moe.augment ? "true" : "false");
  c.set("moe.tail", soliton_tail_name(moe.tail));
  c.set("moe.kernel", soliton_kernel_name(moe.kernel));
  c.set("moe.test_fraction", format_double(moe.test_fraction));
  c.set("moe.importance_coef", format_double(moe.importance_coef));
  c.set("moe.compare_chrono", moe_compare_chrono ? "true" : "false");
  c.set("eval.moe_episodes", std::to_string(episodes.moe));
  c.set("eval.sell_only_episodes", std::to_string(episodes.sell_only));
  c.set("eval.random_episodes", std::to_string(episodes.random));
  c.set("eval.ppo_episodes", std::to_string(episodes.ppo));
  c.set("run.seed", std::to_string(seed));
  return c.canonical();
}

std::string ExperimentConfig::config_hash() const {
  return fnv1a_hex(canonical());
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

ResultsTable run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  auto t0 = std::chrono::steady_clock::now();

  ResultsTable r;
  r.seed = cfg.seed;
  r.config_hash = cfg.config_hash();
  r.started_at = now_string();
  ensure_dir(cfg.out_dir);

  r.dataset = stage("data", [&] {
    if (cfg.source == "synthetic")
      return synth_dataset(cfg.synth_days, cfg.synth_seed, cfg.synth);
    auto gen = aggregate_daily(load_solar_csv(cfg.solar_csv));
    return join_days(gen, load_prices_csv(cfg.prices_csv));
  });
  // flushed immediately so a later stage failure still leaves the data
  write_dataset_csv_file(cfg.out_dir + "/dataset.csv", r.dataset,
                         file_metadata(r));

  auto [env_train_data, env_test_data] = stage("split", [&] {
    return split_chronological(r.dataset, cfg.env_test_fraction);
  });
  if (env_train_data.empty())
    throw ValidationError("split: train side of the environment split is empty");
  NormStats norm = stage("split", [&] {
    return NormStats::fit(env_train_data, cfg.storage_horizon_days);
  });

  Rng master(cfg.seed);

  PPOConfig ppo_short = cfg.ppo;
  ppo_short.epochs = cfg.ppo_epochs_short;
  ppo_short.seed = master.substream(11).seed();
  PPOConfig ppo_long = cfg.ppo;
  ppo_long.epochs = cfg.ppo_epochs_long;
  ppo_long.seed = master.substream(12).seed();

  TradingEnv env_train(env_train_data, norm, cfg.timing, cfg.carry);
  TrainPpoResult short_run = stage("train-ppo-short", [&] {
    return train_ppo(env_train, ppo_short, norm);
  });
  r.curve_short = short_run.curve;
  TrainPpoResult long_run = stage("train-ppo-long", [&] {
    return train_ppo(env_train, ppo_long, norm);
  });
  r.curve_long = long_run.curve;

  // the forecaster trains on its own split of the full series; the random
  // split deliberately reproduces the protocol's train/test day leakage,
  // with a chronological variant reported alongside
  MoEConfig moe_rand = cfg.moe;
  moe_rand.seed = master.substream(13).seed();
  moe_rand.chrono_split = false;
  MoETrainResult forecaster = stage("train-moe", [&] {
    return train_moe(r.dataset, moe_rand);
  });

  auto push_embed_row = [&](const std::string& embedding,
                            const std::string& split, int experts,
                            const MoEMetrics& m) {
    r.embed_rows.push_back({"run", embedding, split, experts, m.train_mse_aug,
                            m.train_mse_clean, m.test_rmse});
  };

  stage("embedding-compare", [&] {
    MoEConfig other = moe_rand;
    other.embedding = cfg.moe.embedding == EmbeddingKind::Soliton
                          ? EmbeddingKind::Table
                          : EmbeddingKind::Soliton;
    MoETrainResult other_rand = train_moe(r.dataset, other);
    const MoEMetrics& soliton_m = cfg.moe.embedding == EmbeddingKind::Soliton
                                      ? forecaster.metrics
                                      : other_rand.metrics;
    const MoEMetrics& table_m = cfg.moe.embedding == EmbeddingKind::Soliton
                                    ? other_rand.metrics
                                    : forecaster.metrics;
    push_embed_row("table", "random", cfg.moe.experts, table_m);
    push_embed_row("soliton", "random", cfg.moe.experts, soliton_m);
    if (cfg.moe_compare_chrono) {
      MoEConfig tc = moe_rand;
      tc.chrono_split = true;
      tc.embedding = EmbeddingKind::Table;
      MoEConfig sc = tc;
      sc.embedding = EmbeddingKind::Soliton;
      push_embed_row("table", "chrono", cfg.moe.experts,
                     train_moe(r.dataset, tc).metrics);
      push_embed_row("soliton", "chrono", cfg.moe.experts,
                     train_moe(r.dataset, sc).metrics);
    }
    for (const EmbedReference& ref : kEmbedReferences)
      r.embed_rows.push_back({"reference", ref.label, "published", ref.experts,
                              ref.train_mse, ref.train_mse, ref.test_rmse});
    return 0;
  });

  r.forecast_audit.reserve(r.dataset.size());
  for (const DayRecord& d : r.dataset.days)
    r.forecast_audit.push_back(
        {d.day, d.price, predict_price(forecaster.model, d.day)});

  stage("evaluate", [&] {
    TradingEnv env_test(env_test_data, norm, cfg.timing, cfg.carry);
    auto add_column = [&](const std::string& name, Policy& p, int episodes,
                          uint64_t tag, double reference) {
      AgentColumn col;
      col.name = name;
      col.totals = evaluate(p, env_test, episodes, master.substream(tag));
      col.mean = mean_of(col.totals);
      col.reference_mean = reference;
      r.columns.push_back(std::move(col));
    };
    BestDayPolicy moe_policy(forecaster.model);
    SellOnlyPolicy sell_policy;
    RandomPolicy random_policy;
    PpoPolicy ppo30(short_run.agent);
    PpoPolicy ppo1000(long_run.agent);
    add_column("MoE", moe_policy, cfg.episodes.moe, 21, kReferenceMeanMoE);
    add_column("SellOnly", sell_policy, cfg.episodes.sell_only, 22,
               kReferenceMeanSellOnly);
    add_column("Random", random_policy, cfg.episodes.random, 23,
               kReferenceMeanRandom);
    add_column("PPO-30", ppo30, cfg.episodes.ppo, 24, kReferenceMeanPpo30);
    add_column("PPO-1000", ppo1000, cfg.episodes.ppo, 25,
               kReferenceMeanPpo1000);
    return 0;
  });

  auto t1 = std::chrono::steady_clock::now();
  r.duration_seconds = std::chrono::duration<double>(t1 - t0).count();
  return r;
}

void emit_report(const ResultsTable& results, const std::string& out_dir) {
  ensure_dir(out_dir);
  const std::vector<std::string> meta = file_metadata(results);

  write_dataset_csv_file(out_dir + "/dataset.csv", results.dataset, meta);

  {
    std::vector<std::string> rows;
    for (const AgentColumn& col : results.columns)
      for (size_t ep = 0; ep < col.totals.size(); ++ep)
        rows.push_back(col.name + "," + std::to_string(ep) + "," +
                       format_double(col.totals[ep]));
    write_csv_file(out_dir + "/table1.csv", meta, "agent,episode,total", rows);
  }
  {
    std::vector<std::string> rows;
    for (const AgentColumn& col : results.columns)
      rows.push_back(col.name + "," + format_double(col.mean) + "," +
                     format_double(col.reference_mean));
    write_csv_file(out_dir + "/table3.csv", meta, "agent,mean,reference_mean",
                   rows);
  }
  {
    std::vector<std::string> rows;
    for (size_t i = 0; i < results.curve_long.size(); ++i)
      rows.push_back(std::to_string(i) + "," +
                     format_double(results.curve_long[i]));
    write_csv_file(out_dir + "/training_curve.csv", meta, "epoch,mean_total",
                   rows);
  }
  {
    std::vector<std::string> rows;
    for (size_t i = 0; i < results.curve_short.size(); ++i)
      rows.push_back(std::to_string(i) + "," +
                     format_double(results.curve_short[i]));
    write_csv_file(out_dir + "/training_curve_short.csv", meta,
                   "epoch,mean_total", rows);
  }
  {
    std::vector<std::string> rows;
    for (const EmbedCompareRow& row : results.embed_rows) {
      rows.push_back(row.source + "," + row.embedding + "," + row.split + "," +
                     std::to_string(row.experts) + "," +
                     format_double(row.train_mse_aug) + "," +
                     format_double(row.train_mse_clean) + "," +
                     format_double(row.test_rmse));
    }
    write_csv_file(out_dir + "/embedding_compare.csv", meta,
                   "source,embedding,split,experts,train_mse_aug,train_mse_"
                   "clean,test_rmse",
                   rows);
  }
  {
    std::vector<std::string> rows;
    for (const ForecastAuditRow& row : results.forecast_audit)
      rows.push_back(std::to_string(row.day) + "," +
                     format_double(row.actual) + "," +
                     format_double(row.predicted));
    write_csv_file(out_dir + "/forecast_audit.csv", meta,
                   "day,actual_price,predicted_price", rows);
  }

  if (!results.columns.empty()) {
    std::vector<std::string> labels;
    std::vector<double> means, refs;
    for (const AgentColumn& col : results.columns) {
      labels.push_back(col.name);
      means.push_back(col.mean);
      refs.push_back(col.reference_mean);
    }
    write_grouped_bar_chart_svg(out_dir + "/fig1_agent_means.svg",
                                "Mean episode total per agent", labels,
                                {"this run", "reference"}, {means, refs}, meta);
  }
  if (!results.curve_long.empty()) {
    std::vector<double> xs(results.curve_long.size());
    for (size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
    write_line_chart_svg(out_dir + "/fig2_training_curve.svg",
                         "Training episode total by epoch", "epoch",
                         "episode total", xs, results.curve_long, meta);
  }
  {
    std::vector<std::string> labels;
    std::vector<double> train_losses, test_losses;
    for (const EmbedCompareRow& row : results.embed_rows) {
      if (row.source != "run") continue;
      labels.push_back(row.embedding + "/" + row.split);
      train_losses.push_back(row.train_mse_clean);
      test_losses.push_back(row.test_rmse);
    }
    if (!labels.empty())
      write_grouped_bar_chart_svg(out_dir + "/fig4_embedding_losses.svg",
                                  "Forecast losses by embedding", labels,
                                  {"train mse", "test rmse"},
                                  {train_losses, test_losses}, meta);
  }
}

namespace {

GradCheckResult check_mlp_mse(const std::string& name, const MlpParams& net,
                              Rng rng) {
  Vector x(net.input_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
  Vector target(net.output_dim());
  for (Eigen::Index i = 0; i < target.size(); ++i) target[i] = rng.normal();

  MlpCache cache;
  Vector out = mlp_forward(net, x, cache);
  MseResult mse = mse_loss(out, target);
  Grads g = Grads::zeros_like(net);
  mlp_backward(net, cache, mse.grad, g);

  auto loss = [&](const MlpParams& p) {
    return mse_loss(mlp_forward(p, x), target).loss;
  };
  GradCheckResult res;
  res.name = name;
  res.params = net.param_count();
  res.max_rel_err = finite_diff_check(loss, net, g);
  return res;
}

struct MoECheck {
  double gate_err = 0.0;
  double expert_err = 0.0;
  double embed_err = 0.0;
  size_t gate_params = 0, expert_params = 0, embed_params = 0;
};

MoECheck check_moe_model(EmbeddingKind kind, Rng rng) {
  MoEConfig cfg;
  cfg.embedding = kind;
  cfg.dim = 12;
  cfg.experts = 6;
  cfg.topk = 2;
  cfg.expert_hidden = 8;
  cfg.embed_hidden = 8;
  Rng make_rng = rng.substream(1);
  MoEModel model = MoEModel::make(cfg, make_rng);

  std::vector<std::pair<double, double>> points;
  Rng point_rng = rng.substream(2);
  for (int day : {3, 77, 191, 320})
    points.emplace_back(static_cast<double>(day), point_rng.normal(10.0, 3.0));

  MoEGrads g = MoEGrads::zeros_like(model);
  for (auto [x, y] : points) moe_backward(model, x, y, g);

  auto loss = [&]() {
    double total = 0.0;
    for (auto [x, y] : points) {
      double d = moe_forward(model, x) - y;
      total += d * d;
    }
    return total;
  };

  MoECheck out;
  {
    std::vector<double*> ptrs = param_ptrs(model.gate);
    out.gate_params = ptrs.size();
    out.gate_err = finite_diff_check(loss, ptrs, flatten(g.gate));
  }
  {
    std::vector<double*> ptrs;
    std::vector<double> analytic;
    for (size_t e = 0; e < model.experts.size(); ++e) {
      auto p = param_ptrs(model.experts[e]);
      ptrs.insert(ptrs.end(), p.begin(), p.end());
      auto a = flatten(g.experts[e]);
      analytic.insert(analytic.end(), a.begin(), a.end());
    }
    out.expert_params = ptrs.size();
    out.expert_err = finite_diff_check(loss, ptrs, analytic);
  }
  if (kind == EmbeddingKind::Soliton) {
    std::vector<double*> ptrs = param_ptrs(model.soliton.amp_net);
    auto p2 = param_ptrs(model.soliton.phase_net);
    ptrs.insert(ptrs.end(), p2.begin(), p2.end());
    std::vector<double> analytic = flatten(g.amp);
    auto a2 = flatten(g.phase);
    analytic.insert(analytic.end(), a2.begin(), a2.end());
    out.embed_params = ptrs.size();
    out.embed_err = finite_diff_check(loss, ptrs, analytic);
  } else {
    std::vector<double*> ptrs = param_ptrs(model.table.lookup);
    out.embed_params = ptrs.size();
    out.embed_err = finite_diff_check(loss, ptrs, flatten(g.table));
  }
  return out;
}

std::pair<GradCheckResult, GradCheckResult> check_ppo_loss(Rng rng) {
  PPOConfig cfg;
  NormStats id = NormStats::identity();
  Rng make_rng = rng.substream(1);
  PpoAgent agent = PpoAgent::make(cfg, id, make_rng);

  Rng buf_rng = rng.substream(2);
  RolloutBuffer buf;
  size_t n = 8;
  for (size_t i = 0; i < n; ++i) {
    Transition t;
    t.obs = Vector(4);
    for (int j = 0; j < 4; ++j) t.obs[j] = buf_rng.normal();
    Observation o{t.obs[0], t.obs[1], t.obs[2], t.obs[3]};
    Vector probs = actor_forward(agent.actor, o);
    auto [a, logp] = categorical_sample(probs, buf_rng);
    t.action = a;
    // stale by a nudge so ratios sit away from 1 on both sides
    t.logp_old = logp + buf_rng.uniform(-0.3, 0.3);
    t.value = critic_forward(agent.critic, o);
    t.reward = buf_rng.uniform();
    t.done = i + 1 == n;
    buf.steps.push_back(std::move(t));
    buf.advantages.push_back(buf_rng.normal());
    buf.returns.push_back(buf_rng.normal());
  }
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;

  Grads ag = Grads::zeros_like(agent.actor);
  Grads cg = Grads::zeros_like(agent.critic);
  PpoLossStats stats = ppo_loss(buf, idx, agent.actor, agent.critic,
                                cfg.clip_eps, cfg.entropy_coef, ag, cg);
  (void)stats;

  Grads scratch_a = Grads::zeros_like(agent.actor);
  Grads scratch_c = Grads::zeros_like(agent.critic);
  auto policy_loss = [&](const MlpParams& actor) {
    scratch_a.set_zero();
    scratch_c.set_zero();
    return ppo_loss(buf, idx, actor, agent.critic, cfg.clip_eps,
                    cfg.entropy_coef, scratch_a, scratch_c)
        .policy_loss;
  };
  auto value_loss = [&](const MlpParams& critic) {
    scratch_a.set_zero();
    scratch_c.set_zero();
    return ppo_loss(buf, idx, agent.actor, critic, cfg.clip_eps,
                    cfg.entropy_coef, scratch_a, scratch_c)
        .value_loss;
  };

  GradCheckResult pol;
  pol.name = "ppo_policy_loss";
  pol.params = agent.actor.param_count();
  pol.max_rel_err = finite_diff_check(policy_loss, agent.actor, ag);
  GradCheckResult val;
  val.name = "ppo_value_loss";
  val.params = agent.critic.param_count();
  val.max_rel_err = finite_diff_check(value_loss, agent.critic, cg);
  return {pol, val};
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed) {
  Rng master(seed);
  std::vector<GradCheckResult> out;

  {
    PPOConfig cfg;
    NormStats id = NormStats::identity();
    Rng make_rng = master.substream(1);
    PpoAgent agent = PpoAgent::make(cfg, id, make_rng);
    out.push_back(check_mlp_mse("actor", agent.actor, master.substream(2)));
    out.push_back(check_mlp_mse("critic", agent.critic, master.substream(3)));
  }

  MoECheck table = check_moe_model(EmbeddingKind::Table, master.substream(4));
  MoECheck soliton =
      check_moe_model(EmbeddingKind::Soliton, master.substream(5));
  out.push_back({"gate", std::max(table.gate_err, soliton.gate_err),
                 table.gate_params + soliton.gate_params});
  out.push_back({"experts", std::max(table.expert_err, soliton.expert_err),
                 table.expert_params + soliton.expert_params});
  out.push_back({"table_embedding", table.embed_err, table.embed_params});
  out.push_back({"soliton_embedding", soliton.embed_err, soliton.embed_params});

  auto [pol, val] = check_ppo_loss(master.substream(6));
  out.push_back(pol);
  out.push_back(val);
  return out;
}

bool gradcheck_passed(const std::vector<GradCheckResult>& results, double tol) {
  for (const GradCheckResult& r : results)
    if (!(r.max_rel_err < tol)) return false;
  return !results.empty();
}

}  // namespace solarlab
