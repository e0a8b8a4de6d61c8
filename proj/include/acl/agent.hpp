#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "acl/buffers.hpp"
#include "acl/curriculum.hpp"
#include "acl/env.hpp"
#include "acl/net/checkpoint.hpp"
#include "acl/rl/awac.hpp"
#include "acl/rl/batch.hpp"
#include "acl/rl/ddpgfd.hpp"

namespace acl {

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_weight = 0.0;
};

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t end = std::min(s.find(',', pos), s.size());
    out.push_back(std::stoi(s.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

inline Action to_action(const net::Matrix& a) { return Action{{a(0, 0), a(1, 0)}}; }

/// Advantage-weighted actor-critic.
class AwacPolicy {
 public:
  static constexpr const char* kName = "awac";

  AwacPolicy(const TaskSpec& spec, const rl::AwacConfig& config, Rng& init_rng)
      : norm_(rl::ObsNormalizer::for_task(spec)),
        l_(rl::make_learner(observation_size(spec), 2, config, init_rng)) {}

  Action act(const EnvState& s, bool stochastic, Rng& rng) const {
    return to_action(rl::sample_actions(l_.actor, norm_(s), rng,
                                        stochastic ? rl::SampleMode::Stochastic : rl::SampleMode::Mean));
  }

  UpdateStats update(const rl::Batch& b, Rng& rng) {
    UpdateStats st;
    st.critic_loss = rl::update_critics(l_, b, rng);
    const auto a = rl::update_actor(l_, b, rng);
    st.actor_loss = a.loss;
    st.mean_weight = a.mean_weight;
    return st;
  }

  /// |y - min Q(s, a)| per transition.
  net::Vector td_errors(const rl::Batch& b, Rng& rng) const {
    return (rl::q_target(l_, b, rng) - rl::min_q(l_.critic1, l_.critic2, b.obs, b.actions)).cwiseAbs();
  }

  int batch_size() const { return l_.config.batch_size; }
  double reward_scale() const { return l_.config.reward_scale; }
  const rl::ObsNormalizer& normalizer() const { return norm_; }
  rl::LearnerState& learner() { return l_; }
  const rl::LearnerState& learner() const { return l_; }

  net::Checkpoint checkpoint() const {
    net::Checkpoint ck = rl::to_checkpoint(l_);
    ck.meta["hidden"] = join_ints(l_.config.hidden);
    ck.meta["critic_layer_norm"] = l_.config.critic_layer_norm ? "1" : "0";
    return ck;
  }
  void load(const net::Checkpoint& ck) { rl::load_from_checkpoint(l_, ck); }

 private:
  rl::ObsNormalizer norm_;
  rl::LearnerState l_;
};

/// Deterministic actor with Gaussian exploration and a Q-filtered BC term.
class DdpgPolicy {
 public:
  static constexpr const char* kName = "ddpgfd_bc";

  DdpgPolicy(const TaskSpec& spec, const rl::DdpgConfig& config, Rng& init_rng)
      : norm_(rl::ObsNormalizer::for_task(spec)),
        l_(rl::make_ddpg_learner(observation_size(spec), 2, config, init_rng)) {}

  Action act(const EnvState& s, bool stochastic, Rng& rng) const {
    net::Matrix a = rl::ddpg_actions(l_.actor, norm_(s));
    if (stochastic) {
      std::normal_distribution<double> n(0.0, l_.config.exploration_std);
      for (Eigen::Index d = 0; d < a.rows(); ++d) a(d, 0) += n(rng);
    }
    return clip_action(to_action(a));
  }

  UpdateStats update(const rl::Batch& b, Rng&) {
    const auto st = rl::ddpg_update(l_, b);
    return {st.critic_loss, st.actor_loss, static_cast<double>(st.bc_active)};
  }

  int batch_size() const { return l_.config.batch_size; }
  double reward_scale() const { return l_.config.reward_scale; }
  const rl::ObsNormalizer& normalizer() const { return norm_; }
  rl::DdpgLearner& learner() { return l_; }

  net::Checkpoint checkpoint() const {
    net::Checkpoint ck = rl::to_checkpoint(l_);
    ck.meta["hidden"] = join_ints(l_.config.hidden);
    ck.meta["critic_layer_norm"] = l_.config.critic_layer_norm ? "1" : "0";
    return ck;
  }
  void load(const net::Checkpoint& ck) { rl::load_from_checkpoint(l_, ck); }

 private:
  rl::ObsNormalizer norm_;
  rl::DdpgLearner l_;
};

struct AgentCounters {
  std::uint64_t env_steps = 0;
  std::uint64_t episodes = 0;
  std::uint64_t updates = 0;
  /// Batches drawn while both buffers held data, and how many of those were not
  /// exactly half demo / half roll-out.
  std::uint64_t mixed_batches = 0;
  std::uint64_t unbalanced_batches = 0;
};

/// Policy plus demo buffer D, roll-out buffer R, env-step accounting and a per-step hook.
template <class Policy>
class Agent {
 public:
  Agent(TaskSpec spec, Policy policy, std::uint64_t step_budget, std::size_t replay_capacity = 1'000'000)
      : env_(std::move(spec)), policy_(std::move(policy)), rollouts_(replay_capacity), step_budget_(step_budget) {}

  RolloutResult rollout(const EnvState& start, RolloutKind kind, Rng& rng) {
    const bool training = kind == RolloutKind::Training;
    const Episode& ep = run_episode(start, training, rng);
    if (training) train(static_cast<int>(ep.size()), rng);
    return {ends_in_goal(ep), static_cast<int>(ep.size())};
  }

  /// Steps the policy from `start`, storing every transition in R.
  const Episode& run_episode(const EnvState& start, bool stochastic, Rng& rng) {
    last_episode_.clear();
    env_.reset_to_state(start);
    while (!env_.done()) {
      const Transition t = env_.step(policy_.act(env_.observe(), stochastic, rng));
      rollouts_.push(t);
      last_episode_.push_back(t);
      ++counters_.env_steps;
      if (step_hook_) step_hook_(counters_.env_steps);
    }
    ++counters_.episodes;
    return last_episode_;
  }

  void train(int updates, Rng& rng) {
    for (int i = 0; i < updates; ++i) {
      const auto samples =
          sample_balanced(demos_, rollouts_, static_cast<std::size_t>(policy_.batch_size()), rng);
      if (!demos_.empty() && !rollouts_.empty()) {
        ++counters_.mixed_batches;
        std::size_t n_demo = 0;
        for (const auto& s : samples) n_demo += s.source == SampleSource::Demo;
        if (2 * n_demo != samples.size()) ++counters_.unbalanced_batches;
      }
      last_stats_ = policy_.update(rl::make_batch(samples, policy_.normalizer(), policy_.reward_scale()), rng);
      ++counters_.updates;
    }
  }

  void add_demonstration(const Demonstration& d) { demos_.push_episode(d); }

  bool exhausted() const { return stop_ || counters_.env_steps >= step_budget_; }
  void request_stop() { stop_ = true; }
  void set_step_hook(std::function<void(std::uint64_t)> hook) { step_hook_ = std::move(hook); }

  const AgentCounters& counters() const { return counters_; }
  const UpdateStats& last_stats() const { return last_stats_; }
  const DemoBuffer& demos() const { return demos_; }
  const ReplayBuffer& rollouts() const { return rollouts_; }
  const Episode& last_episode() const { return last_episode_; }
  const TaskSpec& spec() const { return env_.spec(); }
  Policy& policy() { return policy_; }
  const Policy& policy() const { return policy_; }

 private:
  Env env_;
  Policy policy_;
  DemoBuffer demos_;
  ReplayBuffer rollouts_;
  std::uint64_t step_budget_;
  AgentCounters counters_;
  UpdateStats last_stats_;
  Episode last_episode_;
  std::function<void(std::uint64_t)> step_hook_;
  bool stop_ = false;
};

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double mean_length = 0.0;
  double rate() const { return episodes ? static_cast<double>(successes) / episodes : 0.0; }
};

/// Deterministic-policy episodes from the task's own initial distribution.
template <class Policy>
EvalResult evaluate_policy(const Policy& policy, const TaskSpec& spec, int episodes, Rng& rng) {
  if (episodes < 1) throw ValidationError("evaluate_policy: episodes must be >= 1");
  Env env(spec);
  EvalResult r;
  r.episodes = episodes;
  std::uint64_t steps = 0;
  for (int i = 0; i < episodes; ++i) {
    env.reset(rng);
    Transition t;
    while (!env.done()) {
      t = env.step(policy.act(env.observe(), false, rng));
      ++steps;
    }
    if (t.cause == TerminalCause::Goal) ++r.successes;
  }
  r.mean_length = static_cast<double>(steps) / episodes;
  return r;
}

}  // namespace acl
