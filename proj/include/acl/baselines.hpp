#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "acl/agent.hpp"
#include "acl/curriculum.hpp"
#include "acl/demonstrator.hpp"
#include "acl/json.hpp"

namespace acl {

/// `n` distinct pool demonstrations chosen uniformly (partial Fisher-Yates).
inline std::vector<Demonstration> choose_demos(const std::vector<Demonstration>& pool, std::size_t n, Rng& rng) {
  if (pool.size() < n) throw ValidationError("pool holds fewer demonstrations than requested");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<Demonstration> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
    out.push_back(pool[idx[i]]);
  }
  return out;
}

/// Plain training loop from the task's own initial distribution, used by the
/// offline-demo baselines after their demos are preloaded.
template <class Policy>
void run_preloaded(Agent<Policy>& agent, const std::vector<Demonstration>& demos, Rng& rng) {
  for (const auto& d : demos) agent.add_demonstration(d);
  while (!agent.exhausted()) agent.rollout(sample_initial(agent.spec(), rng), RolloutKind::Training, rng);
}

inline void run_awac_offline(Agent<AwacPolicy>& agent, const std::vector<Demonstration>& pool, int n_d, Rng& rng) {
  run_preloaded(agent, choose_demos(pool, static_cast<std::size_t>(n_d), rng), rng);
}

inline void run_ddpgfd_bc(Agent<DdpgPolicy>& agent, const std::vector<Demonstration>& pool, int n_d, Rng& rng) {
  run_preloaded(agent, choose_demos(pool, static_cast<std::size_t>(n_d), rng), rng);
}

/// Query gate of the EARLY-like baseline: fires when an episode's mean |TD error|
/// exceeds (1 + kappa) times the running mean over earlier episodes.
class TdQueryGate {
 public:
  TdQueryGate(double kappa, int budget) : kappa_(kappa), budget_(budget) {
    if (!(kappa >= 0.0)) throw ValidationError("kappa must be >= 0");
  }

  bool observe(double episode_td) {
    const bool fire = count_ > 0 && used_ < budget_ && episode_td > (1.0 + kappa_) * mean_;
    ++count_;
    mean_ += (episode_td - mean_) / static_cast<double>(count_);
    if (fire) ++used_;
    return fire;
  }

  double running_mean() const { return mean_; }
  int queries() const { return used_; }

 private:
  double kappa_;
  int budget_;
  double mean_ = 0.0;
  std::int64_t count_ = 0;
  int used_ = 0;
};

struct EarlyLikeConfig {
  double kappa = 0.2;
  int n_d = 10;
};

/// AWAC with one initial pool demonstration plus TD-error-triggered queries answered
/// by the pool demonstration whose start is closest to the episode's start.
inline void run_early_like(Agent<AwacPolicy>& agent, const std::vector<Demonstration>& pool,
                           const EarlyLikeConfig& config, Rng& rng, const EventSink& sink = {}) {
  const TaskSpec& spec = agent.spec();
  agent.add_demonstration(choose_demos(pool, 1, rng).front());
  TdQueryGate gate(config.kappa, config.n_d);
  while (!agent.exhausted()) {
    const EnvState start = sample_initial(spec, rng);
    const Episode& ep = agent.run_episode(start, true, rng);
    const auto& policy = agent.policy();
    const double td = policy.td_errors(rl::make_batch(ep, policy.normalizer(), policy.reward_scale()), rng).mean();
    const double before = gate.running_mean();
    if (gate.observe(td)) {
      const std::size_t i = pool_closest_initial_index(pool, spec, start);
      Demonstration d = pool[i];
      d.source = DemoSource::Pool;
      agent.add_demonstration(d);
      if (sink) {
        sink({{"event", "query"},
              {"query_index", gate.queries()},
              {"start", to_json(start)},
              {"pool_index", i},
              {"td_error", td},
              {"td_running_mean", before},
              {"demo_length", d.length()},
              {"attempts", 1},
              {"duration_ms", 0.0}});
      }
    }
    agent.train(static_cast<int>(ep.size()), rng);
  }
}

}  // namespace acl
