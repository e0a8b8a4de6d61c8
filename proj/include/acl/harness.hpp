#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include "acl/agent.hpp"
#include "acl/baselines.hpp"
#include "acl/curriculum.hpp"
#include "acl/demonstrator.hpp"
#include "acl/episode_io.hpp"
#include "acl/json.hpp"

namespace acl {

enum class Method { Curriculum, AwacOffline, DdpgfdBc, EarlyLike };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Curriculum: return "curriculum";
    case Method::AwacOffline: return "awac_offline";
    case Method::DdpgfdBc: return "ddpgfd_bc";
    case Method::EarlyLike: return "early_like";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::Curriculum, Method::AwacOffline, Method::DdpgfdBc, Method::EarlyLike}) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown method: " + std::string(s));
}

struct ConvergenceConfig {
  std::uint64_t window_steps = 10'000;
  double spread = 0.05;
  /// Windows whose lowest rate is below this do not count (a policy stuck at zero
  /// is not "converged").
  double min_success = 0.1;
  /// Stop training once converged with every rate in the window at or above this.
  /// Values above 1 disable early stopping.
  double early_stop_success = 0.95;
};

struct ExperimentConfig {
  TaskId task = TaskId::ReachV0;
  Method method = Method::Curriculum;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::uint64_t step_budget = 200'000;
  DemoSource demonstrator = DemoSource::Oracle;
  std::string output_dir = "runs";
  std::uint64_t eval_interval = 2000;
  int eval_episodes = 20;
  std::uint64_t checkpoint_interval = 50'000;
  int pool_size = 60;
  ConvergenceConfig convergence;
  ScheduleConfig schedule;
  rl::AwacConfig awac;
  rl::DdpgConfig ddpg;
  EarlyLikeConfig early;
  OracleConfig oracle;

  void validate() const {
    if (seeds.empty()) throw ValidationError("at least one seed is required");
    if (step_budget == 0) throw ValidationError("step_budget must be positive");
    if (eval_interval == 0 || eval_episodes < 1) throw ValidationError("evaluation cadence must be positive");
    if (pool_size < schedule.n_d) throw ValidationError("pool_size must be >= n_d");
    if (convergence.window_steps == 0) throw ValidationError("convergence window must be positive");
    schedule.validate();
    awac.validate();
  }
};

namespace config_detail {

template <class T>
void read(const YAML::Node& n, const char* key, T& out) {
  if (n && n[key]) out = n[key].as<T>();
}

inline void reject_unknown(const YAML::Node& n, std::initializer_list<std::string_view> keys, const std::string& where) {
  if (!n) return;
  if (!n.IsMap()) throw ValidationError("config section '" + where + "' must be a mapping");
  for (const auto& kv : n) {
    const auto k = kv.first.as<std::string>();
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ValidationError("unknown config key '" + where + (where.empty() ? "" : ".") + k + "'");
    }
  }
}

}  // namespace config_detail

inline ExperimentConfig config_from_yaml(const YAML::Node& root) {
  using config_detail::read;
  using config_detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(root,
                 {"task", "method", "seeds", "step_budget", "demonstrator", "output_dir", "eval", "checkpoint_interval",
                  "pool_size", "convergence", "curriculum", "awac", "ddpgfd", "early", "oracle"},
                 "");
  if (root["task"]) c.task = parse_task_id(root["task"].as<std::string>());
  if (root["method"]) c.method = parse_method(root["method"].as<std::string>());
  if (root["demonstrator"]) c.demonstrator = parse_demo_source(root["demonstrator"].as<std::string>());
  read(root, "seeds", c.seeds);
  read(root, "step_budget", c.step_budget);
  read(root, "output_dir", c.output_dir);
  read(root, "checkpoint_interval", c.checkpoint_interval);
  read(root, "pool_size", c.pool_size);

  const auto eval = root["eval"];
  reject_unknown(eval, {"interval", "episodes"}, "eval");
  read(eval, "interval", c.eval_interval);
  read(eval, "episodes", c.eval_episodes);

  const auto conv = root["convergence"];
  reject_unknown(conv, {"window_steps", "spread", "min_success", "early_stop_success"}, "convergence");
  read(conv, "window_steps", c.convergence.window_steps);
  read(conv, "spread", c.convergence.spread);
  read(conv, "min_success", c.convergence.min_success);
  read(conv, "early_stop_success", c.convergence.early_stop_success);

  const auto cur = root["curriculum"];
  reject_unknown(cur, {"n_eval", "n_train", "n_q", "n_d", "delta_g", "w", "radius", "max_demo_attempts"},
                 "curriculum");
  read(cur, "n_eval", c.schedule.n_eval);
  read(cur, "n_train", c.schedule.n_train);
  read(cur, "n_q", c.schedule.n_q);
  read(cur, "n_d", c.schedule.n_d);
  read(cur, "delta_g", c.schedule.delta_g);
  read(cur, "w", c.schedule.w);
  read(cur, "radius", c.schedule.radius);
  read(cur, "max_demo_attempts", c.schedule.max_demo_attempts);

  const auto aw = root["awac"];
  reject_unknown(aw,
                 {"hidden", "gamma", "lambda", "tau", "value_samples", "weight_clip", "actor_lr", "critic_lr",
                  "batch_size", "reward_scale", "init_log_std", "layer_norm"},
                 "awac");
  read(aw, "hidden", c.awac.hidden);
  read(aw, "gamma", c.awac.gamma);
  read(aw, "lambda", c.awac.lambda);
  read(aw, "tau", c.awac.tau);
  read(aw, "value_samples", c.awac.value_samples);
  read(aw, "weight_clip", c.awac.weight_clip);
  read(aw, "actor_lr", c.awac.actor_lr);
  read(aw, "critic_lr", c.awac.critic_lr);
  read(aw, "batch_size", c.awac.batch_size);
  read(aw, "reward_scale", c.awac.reward_scale);
  read(aw, "init_log_std", c.awac.init_log_std);
  read(aw, "layer_norm", c.awac.critic_layer_norm);

  const auto dd = root["ddpgfd"];
  reject_unknown(dd,
                 {"hidden", "gamma", "tau", "actor_lr", "critic_lr", "batch_size", "reward_scale", "exploration_std",
                  "bc_weight", "layer_norm"},
                 "ddpgfd");
  // DDPGfD-BC shares the AWAC network and optimizer settings unless overridden.
  c.ddpg.hidden = c.awac.hidden;
  c.ddpg.gamma = c.awac.gamma;
  c.ddpg.tau = c.awac.tau;
  c.ddpg.actor_lr = c.awac.actor_lr;
  c.ddpg.critic_lr = c.awac.critic_lr;
  c.ddpg.batch_size = c.awac.batch_size;
  c.ddpg.reward_scale = c.awac.reward_scale;
  c.ddpg.critic_layer_norm = c.awac.critic_layer_norm;
  read(dd, "hidden", c.ddpg.hidden);
  read(dd, "gamma", c.ddpg.gamma);
  read(dd, "tau", c.ddpg.tau);
  read(dd, "actor_lr", c.ddpg.actor_lr);
  read(dd, "critic_lr", c.ddpg.critic_lr);
  read(dd, "batch_size", c.ddpg.batch_size);
  read(dd, "reward_scale", c.ddpg.reward_scale);
  read(dd, "exploration_std", c.ddpg.exploration_std);
  read(dd, "bc_weight", c.ddpg.bc_weight);
  read(dd, "layer_norm", c.ddpg.critic_layer_norm);

  const auto ea = root["early"];
  reject_unknown(ea, {"kappa"}, "early");
  read(ea, "kappa", c.early.kappa);
  c.early.n_d = c.schedule.n_d;

  const auto orc = root["oracle"];
  reject_unknown(orc, {"noise", "noise_std", "margin"}, "oracle");
  read(orc, "noise", c.oracle.noise);
  read(orc, "noise_std", c.oracle.noise_std);
  read(orc, "margin", c.oracle.margin);

  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  try {
    return config_from_yaml(YAML::LoadFile(path));
  } catch (const YAML::Exception& e) {
    throw IoError("cannot read config " + path + ": " + e.what());
  }
}

struct EvalPoint {
  std::uint64_t env_steps = 0;
  double success = 0.0;
};

/// Earliest evaluation step starting a fully observed window of `window_steps` whose
/// success rates stay within `spread` of each other and at or above `min_success`.
inline std::optional<std::uint64_t> detect_convergence(const std::vector<EvalPoint>& history,
                                                       std::uint64_t window_steps, double spread = 0.05,
                                                       double min_success = 0.0) {
  for (std::size_t i = 0; i < history.size(); ++i) {
    const std::uint64_t end = history[i].env_steps + window_steps;
    if (history.back().env_steps < end) break;
    double lo = history[i].success, hi = lo;
    for (std::size_t j = i; j < history.size() && history[j].env_steps <= end; ++j) {
      lo = std::min(lo, history[j].success);
      hi = std::max(hi, history[j].success);
    }
    if (hi - lo <= spread + 1e-12 && lo >= min_success) return history[i].env_steps;
  }
  return std::nullopt;
}

struct RunResult {
  std::uint64_t seed = 0;
  Method method = Method::Curriculum;
  TaskId task = TaskId::ReachV0;
  bool failed = false;
  std::string error;
  double final_success = 0.0;
  double best_success = 0.0;
  std::optional<std::uint64_t> convergence_step;
  std::uint64_t env_steps = 0;
  std::uint64_t updates = 0;
  int demos = 0;
  int queries = 0;
  int query_attempts = 0;
  double human_time_ms = 0.0;
  bool demo_buffer_all_successful = true;
  std::uint64_t mixed_batches = 0;
  std::uint64_t unbalanced_batches = 0;
  bool stopped_early = false;
  double wall_seconds = 0.0;
  std::vector<EvalPoint> history;
  std::vector<json> query_events;
  std::string run_dir;
};

inline json to_json(const RunResult& r) {
  return json{{"seed", r.seed},
              {"method", to_string(r.method)},
              {"task", to_string(r.task)},
              {"failed", r.failed},
              {"error", r.error},
              {"final_success", r.final_success},
              {"best_success", r.best_success},
              {"convergence_step", r.convergence_step ? json(*r.convergence_step) : json(nullptr)},
              {"env_steps", r.env_steps},
              {"updates", r.updates},
              {"demos", r.demos},
              {"queries", r.queries},
              {"query_attempts", r.query_attempts},
              {"human_time_ms", r.human_time_ms},
              {"demo_buffer_all_successful", r.demo_buffer_all_successful},
              {"mixed_batches", r.mixed_batches},
              {"unbalanced_batches", r.unbalanced_batches},
              {"stopped_early", r.stopped_early},
              {"wall_seconds", r.wall_seconds}};
}

/// Independent RNG stream per (seed, purpose).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x61636cu};
  return Rng(seq);
}

enum RngStream : std::uint64_t { kTrainStream = 1, kEvalStream = 2, kPoolStream = 3, kInitStream = 4 };

inline std::string run_name(const ExperimentConfig& c, std::uint64_t seed) {
  return fmt::format("{}_{}_seed{}", to_string(c.method), to_string(c.task), seed);
}

inline constexpr const char* kMetricsHeader =
    "env_steps,episodes,updates,eval_success,eval_mean_length,critic_loss,actor_loss,mean_weight,demos,queries";

/// Writes metrics and events for one seed and drives evaluation from the agent's step hook.
class RunRecorder {
 public:
  RunRecorder(const ExperimentConfig& config, std::uint64_t seed, RunResult& result)
      : config_(config), result_(result), eval_rng_(make_rng(seed, kEvalStream)) {
    result_.run_dir = (std::filesystem::path(config.output_dir) / run_name(config, seed)).string();
    std::filesystem::create_directories(result_.run_dir);
    metrics_.open(result_.run_dir + "/metrics.csv", std::ios::trunc);
    events_.open(result_.run_dir + "/events.jsonl", std::ios::trunc);
    if (!metrics_ || !events_) throw IoError("cannot open run outputs in " + result_.run_dir);
    metrics_ << kMetricsHeader << '\n';
  }

  EventSink sink() {
    return [this](const json& e) {
      if (e.value("event", "") == "query") {
        ++result_.queries;
        result_.query_attempts += e.value("attempts", 0);
        result_.human_time_ms += e.value("duration_ms", 0.0);
        result_.query_events.push_back(e);
      }
      events_ << e.dump() << '\n';
    };
  }

  template <class Policy>
  void attach(Agent<Policy>& agent) {
    agent.set_step_hook([this, &agent](std::uint64_t steps) {
      if (steps % config_.eval_interval == 0) evaluate(agent);
    });
  }

  template <class Policy>
  void evaluate(Agent<Policy>& agent) {
    const auto& c = agent.counters();
    const EvalResult ev = evaluate_policy(agent.policy(), agent.spec(), config_.eval_episodes, eval_rng_);
    const UpdateStats& st = agent.last_stats();
    metrics_ << fmt::format("{},{},{},{:.6f},{:.4f},{:.9g},{:.9g},{:.9g},{},{}\n", c.env_steps, c.episodes, c.updates,
                            ev.rate(), ev.mean_length, st.critic_loss, st.actor_loss, st.mean_weight,
                            agent.demos().num_episodes(), result_.queries);
    metrics_.flush();
    events_ << json{{"event", "eval"}, {"env_steps", c.env_steps}, {"success", ev.rate()}}.dump() << '\n';
    result_.history.push_back({c.env_steps, ev.rate()});
    result_.final_success = ev.rate();
    result_.best_success = std::max(result_.best_success, ev.rate());
    const auto& conv = config_.convergence;
    if (conv.early_stop_success <= 1.0 &&
        detect_convergence(result_.history, conv.window_steps, conv.spread, conv.early_stop_success)) {
      result_.stopped_early = true;
      agent.request_stop();
    }
    if (config_.checkpoint_interval > 0 && c.env_steps % config_.checkpoint_interval == 0) {
      save_checkpoint_file(agent, fmt::format("{}/checkpoint_{}.bin", result_.run_dir, c.env_steps));
    }
  }

  template <class Policy>
  void finish(Agent<Policy>& agent) {
    const auto& c = agent.counters();
    if (result_.history.empty() || result_.history.back().env_steps != c.env_steps) evaluate(agent);
    save_checkpoint_file(agent, result_.run_dir + "/checkpoint_final.bin");
    result_.env_steps = c.env_steps;
    result_.updates = c.updates;
    result_.demos = static_cast<int>(agent.demos().num_episodes());
    result_.mixed_batches = c.mixed_batches;
    result_.unbalanced_batches = c.unbalanced_batches;
    for (const auto& d : agent.demos().episodes()) {
      if (!d.success || !ends_in_goal(d.transitions)) result_.demo_buffer_all_successful = false;
    }
    const auto& conv = config_.convergence;
    result_.convergence_step = detect_convergence(result_.history, conv.window_steps, conv.spread, conv.min_success);
  }

  template <class Policy>
  void save_checkpoint_file(const Agent<Policy>& agent, const std::string& path) const {
    net::Checkpoint ck = agent.policy().checkpoint();
    ck.meta["task"] = std::string(to_string(agent.spec().task_id));
    ck.meta["method"] = std::string(to_string(config_.method));
    ck.meta["env_steps"] = std::to_string(agent.counters().env_steps);
    net::save_checkpoint(ck, path);
  }

 private:
  const ExperimentConfig& config_;
  RunResult& result_;
  Rng eval_rng_;
  std::ofstream metrics_;
  std::ofstream events_;
};

inline std::vector<Demonstration> make_pool(const ExperimentConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed, kPoolStream);
  return generate_pool(make_task(config.task), static_cast<std::size_t>(config.pool_size), rng, config.oracle);
}

/// One full training run. `human` supplies demonstrations in human mode.
inline RunResult run_seed(const ExperimentConfig& config, std::uint64_t seed, Demonstrator* human = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.seed = seed;
  result.method = config.method;
  result.task = config.task;
  try {
    RunRecorder rec(config, seed, result);
    const TaskSpec spec = make_task(config.task);
    Rng rng = make_rng(seed, kTrainStream);
    Rng init_rng = make_rng(seed, kInitStream);
    auto sink = rec.sink();

    switch (config.method) {
      case Method::Curriculum: {
        Agent<AwacPolicy> agent(spec, AwacPolicy(spec, config.awac, init_rng), config.step_budget);
        rec.attach(agent);
        std::unique_ptr<Demonstrator> owned;
        Demonstrator* dem = human;
        if (config.demonstrator == DemoSource::Oracle) {
          owned = std::make_unique<OracleDemonstrator>(spec, config.oracle);
        } else if (config.demonstrator == DemoSource::Pool) {
          owned = std::make_unique<PoolDemonstrator>(spec, make_pool(config, seed), PoolMatch::ClosestStateSuffix);
        }
        if (owned) dem = owned.get();
        if (!dem) throw ValidationError("human demonstrator mode needs a connected bridge");
        CurriculumScheduler scheduler(spec, config.schedule, agent, *dem, sink);
        scheduler.bootstrap(rng);
        rec.evaluate(agent);
        while (!agent.exhausted()) scheduler.iterate(rng);
        rec.finish(agent);
        break;
      }
      case Method::AwacOffline: {
        const auto pool = make_pool(config, seed);
        Agent<AwacPolicy> agent(spec, AwacPolicy(spec, config.awac, init_rng), config.step_budget);
        rec.attach(agent);
        rec.evaluate(agent);
        run_awac_offline(agent, pool, config.schedule.n_d, rng);
        rec.finish(agent);
        break;
      }
      case Method::DdpgfdBc: {
        const auto pool = make_pool(config, seed);
        Agent<DdpgPolicy> agent(spec, DdpgPolicy(spec, config.ddpg, init_rng), config.step_budget);
        rec.attach(agent);
        rec.evaluate(agent);
        run_ddpgfd_bc(agent, pool, config.schedule.n_d, rng);
        rec.finish(agent);
        break;
      }
      case Method::EarlyLike: {
        const auto pool = make_pool(config, seed);
        Agent<AwacPolicy> agent(spec, AwacPolicy(spec, config.awac, init_rng), config.step_budget);
        rec.attach(agent);
        rec.evaluate(agent);
        run_early_like(agent, pool, config.early, rng, sink);
        rec.finish(agent);
        break;
      }
    }
  } catch (const std::exception& e) {
    result.failed = true;
    result.error = e.what();
    spdlog::error("run {} seed {} failed: {}", to_string(config.method), seed, e.what());
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!result.run_dir.empty()) {
    std::ofstream os(result.run_dir + "/summary.json", std::ios::trunc);
    os << to_json(result).dump(2) << '\n';
  }
  return result;
}

/// Every seed of the config; failures are recorded and the remaining seeds still run.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& config, Demonstrator* human = nullptr) {
  config.validate();
  std::vector<RunResult> results;
  for (auto seed : config.seeds) {
    spdlog::info("{} on {} seed {}", to_string(config.method), to_string(config.task), seed);
    results.push_back(run_seed(config, seed, human));
    const auto& r = results.back();
    spdlog::info("  final success {:.2f}, converged at {}, {} steps, {:.1f}s", r.final_success,
                 r.convergence_step ? std::to_string(*r.convergence_step) : "never", r.env_steps, r.wall_seconds);
  }
  std::filesystem::create_directories(config.output_dir);
  std::ofstream os(std::filesystem::path(config.output_dir) /
                       fmt::format("summary_{}_{}.csv", to_string(config.method), to_string(config.task)),
                   std::ios::trunc);
  os << "seed,failed,final_success,best_success,convergence_step,env_steps,demos,queries,query_attempts,"
        "human_time_ms\n";
  for (const auto& r : results) {
    os << fmt::format("{},{},{:.6f},{:.6f},{},{},{},{},{},{:.1f}\n", r.seed, r.failed ? 1 : 0, r.final_success,
                      r.best_success, r.convergence_step ? std::to_string(*r.convergence_step) : "", r.env_steps,
                      r.demos, r.queries, r.query_attempts, r.human_time_ms);
  }
  return results;
}

}  // namespace acl
