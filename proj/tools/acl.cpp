#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "acl/agent.hpp"
#include "acl/bridge.hpp"
#include "acl/episode_io.hpp"
#include "acl/harness.hpp"

using namespace acl;

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& method,
            const std::string& task, int serve_port) {
  ExperimentConfig config = load_config(config_path);
  if (seed) config.seeds = {*seed};
  if (!method.empty()) config.method = parse_method(method);
  if (!task.empty()) config.task = parse_task_id(task);
  std::unique_ptr<BridgeServer> bridge;
  std::unique_ptr<RemoteDemonstrator> human;
  if (serve_port >= 0) {
    BridgeConfig bc;
    bc.port = static_cast<unsigned short>(serve_port);
    bridge = std::make_unique<BridgeServer>(bc);
    human = std::make_unique<RemoteDemonstrator>(make_task(config.task), *bridge);
    config.demonstrator = DemoSource::Human;
    spdlog::info("waiting for the demonstration UI on ws://{}:{}", bc.address, bridge->port());
  }
  std::filesystem::create_directories(config.output_dir);
  std::filesystem::copy_file(config_path, std::filesystem::path(config.output_dir) / "config.yaml",
                             std::filesystem::copy_options::overwrite_existing);
  const auto results = run_experiment(config, human.get());
  int failed = 0;
  for (const auto& r : results) {
    failed += r.failed;
    std::cout << to_json(r).dump() << '\n';
  }
  return failed ? 1 : 0;
}

int cmd_eval(const std::string& path, int episodes, std::uint64_t seed) {
  const net::Checkpoint ck = net::load_checkpoint(path);
  auto meta = [&](const std::string& k) {
    auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw IoError("checkpoint lacks '" + k + "' metadata");
    return it->second;
  };
  const TaskSpec spec = make_task(parse_task_id(meta("task")));
  Rng init(0), rng = make_rng(seed, kEvalStream);
  EvalResult r;
  if (meta("learner") == AwacPolicy::kName) {
    rl::AwacConfig c;
    c.hidden = split_ints(meta("hidden"));
    c.critic_layer_norm = meta("critic_layer_norm") == "1";
    AwacPolicy p(spec, c, init);
    p.load(ck);
    r = evaluate_policy(p, spec, episodes, rng);
  } else if (meta("learner") == DdpgPolicy::kName) {
    rl::DdpgConfig c;
    c.hidden = split_ints(meta("hidden"));
    c.critic_layer_norm = meta("critic_layer_norm") == "1";
    DdpgPolicy p(spec, c, init);
    p.load(ck);
    r = evaluate_policy(p, spec, episodes, rng);
  } else {
    throw IoError("unknown learner in checkpoint: " + meta("learner"));
  }
  std::cout << json{{"task", to_string(spec.task_id)},
                    {"episodes", r.episodes},
                    {"successes", r.successes},
                    {"success_rate", r.rate()},
                    {"mean_length", r.mean_length}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_pool_gen(const std::string& task, int count, std::uint64_t seed, const std::string& out) {
  const TaskSpec spec = make_task(parse_task_id(task));
  Rng rng = make_rng(seed, kPoolStream);
  const auto pool = generate_pool(spec, static_cast<std::size_t>(count), rng);
  save_episodes(out, spec.task_id, pool);
  spdlog::info("wrote {} demonstrations to {}", pool.size(), out);
  return 0;
}

/// Success-rate curves (long format) and query traces from run directories.
int cmd_plot(const std::vector<std::string>& inputs, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream curves(std::filesystem::path(out_dir) / "success_curves.csv");
  std::ofstream traces(std::filesystem::path(out_dir) / "query_trace.csv");
  curves << "run,env_steps,eval_success\n";
  traces << "run,query_index,x,y,attempts,duration_ms\n";
  for (const auto& in : inputs) {
    std::filesystem::path metrics = in;
    if (std::filesystem::is_directory(metrics)) metrics /= "metrics.csv";
    std::ifstream is(metrics);
    if (!is) throw IoError("cannot read " + metrics.string());
    const std::string run = metrics.parent_path().filename().string();
    std::string line;
    std::getline(is, line);
    if (line != kMetricsHeader) throw IoError(metrics.string() + " is not a metrics file");
    while (std::getline(is, line)) {
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      if (cols.size() < 4) throw IoError("short metrics row in " + metrics.string());
      curves << run << ',' << cols[0] << ',' << cols[3] << '\n';
    }
    std::ifstream ev(metrics.parent_path() / "events.jsonl");
    while (std::getline(ev, line)) {
      const json e = json::parse(line);
      if (e.value("event", "") != "query") continue;
      const EnvState s = state_from_json(e.at("start"));
      const Vec2 p = s.cube ? *s.cube : s.gripper;
      traces << run << ',' << e.at("query_index") << ',' << p.x << ',' << p.y << ',' << e.value("attempts", 0) << ','
             << e.value("duration_ms", 0.0) << '\n';
    }
  }
  spdlog::info("wrote success_curves.csv and query_trace.csv to {}", out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active curriculum learning from online demonstrations"};
  app.require_subcommand(1);

  std::string config_path, method, task;
  std::optional<std::uint64_t> seed;
  int serve_port = -1;
  auto* run = app.add_subcommand("run", "Train one method over the configured seeds");
  run->add_option("--config", config_path, "YAML experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run only this seed");
  run->add_option("--method", method, "curriculum | awac_offline | ddpgfd_bc | early_like");
  run->add_option("--task", task, "ReachV0 | ReachV1 | PushV0 | PushV1");
  run->add_option("--serve-human", serve_port, "Serve the demonstration UI bridge on this port");

  std::string checkpoint;
  int episodes = 100;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the task's own start distribution");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  auto* pool = app.add_subcommand("pool", "Demonstration pools");
  pool->require_subcommand(1);
  std::string pool_task = "PushV0", pool_out;
  int pool_count = 60;
  std::uint64_t pool_seed = 0;
  auto* gen = pool->add_subcommand("gen", "Generate an oracle demonstration pool");
  gen->add_option("--task", pool_task, "Task")->required();
  gen->add_option("--count", pool_count, "Number of demonstrations")->check(CLI::PositiveNumber);
  gen->add_option("--seed", pool_seed, "Seed");
  gen->add_option("--out", pool_out, "Episode file (default pool_<task>.jsonl)");

  std::vector<std::string> plot_from;
  std::string plot_out = "plots";
  auto* plot = app.add_subcommand("plot", "Export success curves and query traces from runs");
  plot->add_option("--from", plot_from, "Run directories or metrics.csv files")->required();
  plot->add_option("--out", plot_out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, seed, method, task, serve_port);
    if (*eval) return cmd_eval(checkpoint, episodes, eval_seed);
    if (*gen) return cmd_pool_gen(pool_task, pool_count, pool_seed, pool_out.empty() ? "pool_" + pool_task + ".jsonl" : pool_out);
    if (*plot) return cmd_plot(plot_from, plot_out);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
