#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "solarlab/agents.hpp"
#include "solarlab/config.hpp"
#include "solarlab/dataio.hpp"
#include "solarlab/env.hpp"
#include "solarlab/errors.hpp"
#include "solarlab/forecast.hpp"
#include "solarlab/harness.hpp"
#include "solarlab/nn.hpp"
#include "solarlab/report.hpp"

namespace sl = solarlab;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void attach(CLI::App* cmd, const char* out_help) {
    cmd->add_option("-c,--config", config_path, "config file (ini-style)");
    cmd->add_option("--set", overrides,
                    "override a config key, section.key=value (repeatable)");
    seed_opt = cmd->add_option("--seed", seed, "run seed (run.seed)");
    out_opt = cmd->add_option("-o,--out", out, out_help);
  }

  sl::Config build() const {
    sl::Config c = config_path.empty() ? sl::Config{}
                                       : sl::Config::from_file(config_path);
    for (const std::string& kv : overrides) c.set(kv);
    if (seed_opt && seed_opt->count()) c.set("run.seed", std::to_string(seed));
    return c;
  }
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string cur;
  std::istringstream is(text);
  while (std::getline(is, cur, ',')) out.push_back(std::stoi(cur));
  if (out.empty()) throw sl::ConfigError("empty int list '" + text + "'");
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

std::string resolve_near(const std::string& anchor_file, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute()) return rel;
  return (std::filesystem::path(anchor_file).parent_path() / p).string();
}

sl::Dataset load_experiment_data(const sl::ExperimentConfig& e) {
  if (e.source == "synthetic")
    return sl::synth_dataset(e.synth_days, e.synth_seed, e.synth);
  auto gen = sl::aggregate_daily(sl::load_solar_csv(e.solar_csv));
  return sl::join_days(gen, sl::load_prices_csv(e.prices_csv));
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw sl::IoError("cannot open for write: " + path);
  os << text;
  if (!os) throw sl::IoError("write failed: " + path);
}

void save_ppo_checkpoint(const std::string& dir, const sl::PpoAgent& agent,
                         const sl::PPOConfig& pc, const std::string& hash) {
  sl::ensure_dir(dir);
  sl::save_mlp_file(dir + "/actor.bin", agent.actor);
  sl::save_mlp_file(dir + "/critic.bin", agent.critic);
  std::ostringstream os;
  os << "# ppo agent checkpoint sidecar\n";
  os << "# config_hash=" << hash << "\n";
  os << "[agent]\n";
  os << "kind = ppo\n";
  os << "actor = actor.bin\n";
  os << "critic = critic.bin\n";
  os << "actor_hidden = " << join_int_list(pc.actor_hidden) << "\n";
  os << "critic_hidden = " << join_int_list(pc.critic_hidden) << "\n";
  os << "[norm]\n";
  os << "p_mean = " << sl::format_double(agent.norm.p_mean) << "\n";
  os << "p_std = " << sl::format_double(agent.norm.p_std) << "\n";
  os << "g_mean = " << sl::format_double(agent.norm.g_mean) << "\n";
  os << "g_std = " << sl::format_double(agent.norm.g_std) << "\n";
  os << "w_scale = " << sl::format_double(agent.norm.w_scale) << "\n";
  os << "r_scale = " << sl::format_double(agent.norm.r_scale) << "\n";
  write_text_file(dir + "/ppo_agent.cfg", os.str());
}

sl::PpoAgent load_ppo_checkpoint(const std::string& sidecar) {
  sl::Config c = sl::Config::from_file(sidecar);
  if (c.get_string("agent.kind", "") != "ppo")
    throw sl::ConfigError(sidecar + ": not a ppo checkpoint sidecar");
  auto ah = parse_int_list(c.get_string("agent.actor_hidden", "64,64,64"));
  auto ch = parse_int_list(c.get_string("agent.critic_hidden", "64,64"));
  sl::PpoAgent a;
  a.actor = sl::load_mlp_file(
      resolve_near(sidecar, c.get_string("agent.actor", "actor.bin")),
      sl::PpoAgent::actor_acts(ah.size()));
  a.critic = sl::load_mlp_file(
      resolve_near(sidecar, c.get_string("agent.critic", "critic.bin")),
      sl::PpoAgent::critic_acts(ch.size()));
  a.norm.p_mean = c.get_double("norm.p_mean", 0.0);
  a.norm.p_std = c.get_double("norm.p_std", 1.0);
  a.norm.g_mean = c.get_double("norm.g_mean", 0.0);
  a.norm.g_std = c.get_double("norm.g_std", 1.0);
  a.norm.w_scale = c.get_double("norm.w_scale", 1.0);
  a.norm.r_scale = c.get_double("norm.r_scale", 1.0);
  a.norm.validate();
  return a;
}

sl::MoEModel load_moe_checkpoint(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".bin")
    return sl::load_moe_file(path);
  sl::Config c = sl::Config::from_file(path);
  if (c.get_string("agent.kind", "") != "moe")
    throw sl::ConfigError(path + ": not a moe checkpoint sidecar");
  return sl::load_moe_file(
      resolve_near(path, c.get_string("agent.model", "moe.bin")));
}

int cmd_synth(const CommonOpts& common, CLI::Option* days_opt, int days,
              CLI::Option* dseed_opt, uint64_t dseed) {
  sl::Config c = common.build();
  if (days_opt->count()) c.set("dataset.days", std::to_string(days));
  if (dseed_opt->count()) c.set("dataset.seed", std::to_string(dseed));
  c.set("dataset.source", "synthetic");
  sl::ExperimentConfig e = sl::ExperimentConfig::from_config(c);
  e.validate();
  sl::Dataset ds = sl::synth_dataset(e.synth_days, e.synth_seed, e.synth);
  std::string out =
      common.out_opt->count() ? common.out : std::string("dataset.csv");
  std::vector<std::string> meta = {
      "seed=" + std::to_string(e.synth_seed),
      "days=" + std::to_string(e.synth_days),
      "price_base=" + sl::format_double(e.synth.price_base),
      "price_amplitude=" + sl::format_double(e.synth.price_amplitude),
      "price_noise=" + sl::format_double(e.synth.price_noise),
      "gen_amplitude=" + sl::format_double(e.synth.gen_amplitude),
      "gen_noise=" + sl::format_double(e.synth.gen_noise),
  };
  sl::write_dataset_csv_file(out, ds, meta);
  std::cout << "wrote " << ds.size() << " days to " << out << "\n";
  return 0;
}

int cmd_train_ppo(const CommonOpts& common, CLI::Option* epochs_opt,
                  int epochs) {
  sl::Config c = common.build();
  if (common.out_opt->count()) c.set("run.out_dir", common.out);
  sl::ExperimentConfig e = sl::ExperimentConfig::from_config(c);
  e.validate();

  sl::Dataset ds = load_experiment_data(e);
  auto [train, test] = sl::split_chronological(ds, e.env_test_fraction);
  sl::NormStats norm = sl::NormStats::fit(train, e.storage_horizon_days);
  sl::TradingEnv env(train, norm, e.timing, e.carry);

  sl::PPOConfig pc = e.ppo;
  pc.epochs = epochs_opt->count() ? epochs : e.ppo_epochs_long;
  pc.seed = e.seed;
  sl::TrainPpoResult res = sl::train_ppo(env, pc, norm);

  std::string hash = e.config_hash();
  save_ppo_checkpoint(e.out_dir, res.agent, pc, hash);
  std::vector<std::string> rows;
  for (size_t i = 0; i < res.curve.size(); ++i)
    rows.push_back(std::to_string(i) + "," + sl::format_double(res.curve[i]));
  sl::write_csv_file(e.out_dir + "/training_curve.csv",
                     {"config_hash=" + hash, "seed=" + std::to_string(e.seed)},
                     "epoch,mean_total", rows);

  std::cout << "trained " << pc.epochs << " epochs on " << train.size()
            << " train days\n";
  if (!res.curve.empty())
    std::cout << "final training episode total: "
              << sl::format_double(res.curve.back()) << "\n";
  std::cout << "checkpoint: " << e.out_dir << "/ppo_agent.cfg (+ actor.bin, "
            << "critic.bin), curve: " << e.out_dir << "/training_curve.csv\n";
  return 0;
}

int cmd_train_moe(const CommonOpts& common, CLI::Option* epochs_opt,
                  int epochs) {
  sl::Config c = common.build();
  if (common.out_opt->count()) c.set("run.out_dir", common.out);
  sl::ExperimentConfig e = sl::ExperimentConfig::from_config(c);
  e.validate();

  sl::Dataset ds = load_experiment_data(e);
  sl::MoEConfig mc = e.moe;
  mc.seed = e.seed;
  if (epochs_opt->count()) mc.epochs = epochs;
  sl::MoETrainResult res = sl::train_moe(ds, mc);

  std::string hash = e.config_hash();
  sl::ensure_dir(e.out_dir);
  sl::save_moe_file(e.out_dir + "/moe.bin", res.model);
  std::ostringstream os;
  os << "# forecaster checkpoint sidecar\n";
  os << "# config_hash=" << hash << "\n";
  os << "[agent]\n";
  os << "kind = moe\n";
  os << "model = moe.bin\n";
  os << "embedding = " << sl::embedding_kind_name(mc.embedding) << "\n";
  os << "[metrics]\n";
  os << "train_mse_aug = " << sl::format_double(res.metrics.train_mse_aug)
     << "\n";
  os << "train_mse_clean = " << sl::format_double(res.metrics.train_mse_clean)
     << "\n";
  os << "test_rmse = " << sl::format_double(res.metrics.test_rmse) << "\n";
  write_text_file(e.out_dir + "/moe.cfg", os.str());

  std::cout << "trained " << sl::embedding_kind_name(mc.embedding)
            << " forecaster for " << mc.epochs << " epochs on " << ds.size()
            << " days\n";
  std::cout << "train mse (augmented): "
            << sl::format_double(res.metrics.train_mse_aug) << "\n";
  std::cout << "train mse (clean): "
            << sl::format_double(res.metrics.train_mse_clean) << "\n";
  std::cout << "test rmse: " << sl::format_double(res.metrics.test_rmse)
            << "\n";
  std::cout << "checkpoint: " << e.out_dir << "/moe.cfg (+ moe.bin)\n";
  return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& agent,
                 const std::string& checkpoint, int episodes,
                 const std::string& audit_path) {
  sl::Config c = common.build();
  sl::ExperimentConfig e = sl::ExperimentConfig::from_config(c);
  e.validate();
  if (episodes < 1) throw sl::ConfigError("--episodes must be positive");

  sl::Dataset ds = load_experiment_data(e);
  auto [train, test] = sl::split_chronological(ds, e.env_test_fraction);

  sl::NormStats norm;
  std::unique_ptr<sl::Policy> policy;
  sl::PpoAgent ppo_agent;
  sl::MoEModel moe_model;
  if (agent == "sell_only") {
    norm = sl::NormStats::fit(train, e.storage_horizon_days);
    policy = std::make_unique<sl::SellOnlyPolicy>();
  } else if (agent == "random") {
    norm = sl::NormStats::fit(train, e.storage_horizon_days);
    policy = std::make_unique<sl::RandomPolicy>();
  } else if (agent == "ppo") {
    if (checkpoint.empty())
      throw sl::ConfigError("--checkpoint is required for --agent ppo");
    ppo_agent = load_ppo_checkpoint(checkpoint);
    norm = ppo_agent.norm;
    policy = std::make_unique<sl::PpoPolicy>(ppo_agent);
  } else if (agent == "moe") {
    if (checkpoint.empty())
      throw sl::ConfigError("--checkpoint is required for --agent moe");
    moe_model = load_moe_checkpoint(checkpoint);
    norm = sl::NormStats::fit(train, e.storage_horizon_days);
    policy = std::make_unique<sl::BestDayPolicy>(moe_model);
  } else {
    throw sl::ConfigError("unknown agent '" + agent +
                          "' (want moe, sell_only, random or ppo)");
  }

  sl::TradingEnv env(test, norm, e.timing, e.carry);
  sl::Rng base(e.seed);

  if (!audit_path.empty()) {
    // replay of evaluation episode 0, with the trace sink attached
    std::vector<sl::AuditRow> rows;
    env.set_audit(&rows);
    sl::Rng ep_rng = base.substream(100).substream(0);
    sl::Observation o = env.reset();
    policy->begin_episode(env, ep_rng);
    while (!env.done()) {
      sl::Action a = policy->act(o, env, ep_rng);
      auto sr = env.step(a);
      o = sr.obs;
    }
    env.set_audit(nullptr);
    sl::write_audit_csv_file(audit_path, rows,
                             {"agent=" + agent,
                              "seed=" + std::to_string(e.seed)});
    std::cout << "audit trace (episode 0): " << audit_path << "\n";
  }

  std::vector<double> totals =
      sl::evaluate(*policy, env, episodes, base.substream(100));
  for (size_t i = 0; i < totals.size(); ++i)
    std::cout << "episode " << i << ": " << sl::format_double(totals[i])
              << "\n";
  std::cout << "mean over " << totals.size() << " episodes: "
            << sl::format_double(sl::mean_of(totals)) << "\n";
  return 0;
}

int cmd_experiment(const CommonOpts& common) {
  sl::Config c = common.build();
  if (common.out_opt->count()) c.set("run.out_dir", common.out);
  sl::ExperimentConfig e = sl::ExperimentConfig::from_config(c);
  e.validate();

  std::cout << "config_hash=" << e.config_hash() << " seed=" << e.seed << "\n";
  sl::ResultsTable r = sl::run_experiment(e);
  std::cout << "started_at=" << r.started_at << "\n";
  sl::emit_report(r, e.out_dir);

  std::printf("%-10s %12s %12s\n", "agent", "mean", "reference");
  for (const sl::AgentColumn& col : r.columns)
    std::printf("%-10s %12.4f %12.4f\n", col.name.c_str(), col.mean,
                col.reference_mean);
  std::printf("done in %.1f s, report in %s\n", r.duration_seconds,
              e.out_dir.c_str());
  return 0;
}

int cmd_gradcheck(uint64_t seed) {
  std::vector<sl::GradCheckResult> results = sl::run_gradcheck_suite(seed);
  std::printf("%-18s %10s %14s\n", "component", "params", "max_rel_err");
  for (const sl::GradCheckResult& r : results)
    std::printf("%-18s %10zu %14.3e\n", r.name.c_str(), r.params,
                r.max_rel_err);
  bool ok = sl::gradcheck_passed(results);
  std::printf("%s (tolerance 1e-4)\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"solarlab: prosumer energy-trading laboratory"};
  app.require_subcommand(1);

  CommonOpts synth_c, ppo_c, moe_c, eval_c, exp_c;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_c.attach(synth, "output csv path (default dataset.csv)");
  int synth_days = 365;
  uint64_t synth_seed = 42;
  CLI::Option* synth_days_opt =
      synth->add_option("--days", synth_days, "number of days");
  CLI::Option* synth_seed_opt =
      synth->add_option("--data-seed", synth_seed, "dataset seed");

  CLI::App* tppo = app.add_subcommand("train-ppo", "train the PPO agent");
  ppo_c.attach(tppo, "output directory (run.out_dir)");
  int ppo_epochs = 0;
  CLI::Option* ppo_epochs_opt =
      tppo->add_option("--epochs", ppo_epochs, "training epochs");

  CLI::App* tmoe =
      app.add_subcommand("train-moe", "train the price forecaster");
  moe_c.attach(tmoe, "output directory (run.out_dir)");
  int moe_epochs = 0;
  CLI::Option* moe_epochs_opt =
      tmoe->add_option("--epochs", moe_epochs, "training epochs");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate an agent");
  eval_c.attach(ev, "(unused for evaluate)");
  std::string ev_agent, ev_checkpoint, ev_audit;
  int ev_episodes = 30;
  ev->add_option("--agent", ev_agent, "moe | sell_only | random | ppo")
      ->required();
  ev->add_option("--checkpoint", ev_checkpoint,
                 "checkpoint sidecar (.cfg) or model file (.bin)");
  ev->add_option("--episodes", ev_episodes, "evaluation episodes");
  ev->add_option("--audit", ev_audit, "write a per-step trace csv here");

  CLI::App* exp =
      app.add_subcommand("experiment", "full protocol run plus report");
  exp_c.attach(exp, "output directory (run.out_dir)");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference sweep");
  uint64_t gc_seed = 42;
  gc->add_option("--seed", gc_seed, "suite seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand(synth))
      return cmd_synth(synth_c, synth_days_opt, synth_days, synth_seed_opt,
                       synth_seed);
    if (app.got_subcommand(tppo))
      return cmd_train_ppo(ppo_c, ppo_epochs_opt, ppo_epochs);
    if (app.got_subcommand(tmoe))
      return cmd_train_moe(moe_c, moe_epochs_opt, moe_epochs);
    if (app.got_subcommand(ev))
      return cmd_evaluate(eval_c, ev_agent, ev_checkpoint, ev_episodes,
                          ev_audit);
    if (app.got_subcommand(exp)) return cmd_experiment(exp_c);
    if (app.got_subcommand(gc)) return cmd_gradcheck(gc_seed);
    std::cerr << app.help();
    return 1;
  } catch (const sl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const sl::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const sl::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const sl::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const sl::ContractError& e) {
    std::cerr << "internal contract violation: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
