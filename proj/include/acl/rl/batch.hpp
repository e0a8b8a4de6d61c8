#pragma once

#include <vector>

#include "acl/buffers.hpp"
#include "acl/env.hpp"
#include "acl/net/mlp.hpp"

namespace acl::rl {

using net::Matrix;
using net::Vector;

/// Maps workspace coordinates to roughly [-1, 1] before they reach a network.
struct ObsNormalizer {
  Vec2 center;
  Vec2 half_extent{1.0, 1.0};

  static ObsNormalizer for_task(const TaskSpec& spec) {
    return {spec.workspace.center(), 0.5 * spec.workspace.size()};
  }

  void apply(const EnvState& s, double* out) const {
    out[0] = (s.gripper.x - center.x) / half_extent.x;
    out[1] = (s.gripper.y - center.y) / half_extent.y;
    if (s.cube) {
      out[2] = (s.cube->x - center.x) / half_extent.x;
      out[3] = (s.cube->y - center.y) / half_extent.y;
    }
  }

  Vector operator()(const EnvState& s) const {
    Vector v(s.cube ? 4 : 2);
    apply(s, v.data());
    return v;
  }
};

/// Column-major training batch. Rewards are already scaled for the learner.
struct Batch {
  Matrix obs;
  Matrix actions;
  Vector rewards;
  Matrix next_obs;
  Vector not_done;
  std::vector<SampleSource> sources;

  Eigen::Index size() const { return obs.cols(); }
};

/// Only goal and obstacle terminations stop bootstrapping; a timeout does not.
inline bool is_true_terminal(const Transition& t) {
  return t.terminal && (t.cause == TerminalCause::Goal || t.cause == TerminalCause::Obstacle);
}

inline Batch make_batch(const std::vector<SampledTransition>& samples, const ObsNormalizer& norm,
                        double reward_scale) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index obs_dim = samples.empty() || !samples.front().transition->s.cube ? 2 : 4;
  Batch b;
  b.obs.resize(obs_dim, n);
  b.next_obs.resize(obs_dim, n);
  b.actions.resize(2, n);
  b.rewards.resize(n);
  b.not_done.resize(n);
  b.sources.reserve(samples.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *samples[static_cast<std::size_t>(i)].transition;
    norm.apply(t.s, b.obs.col(i).data());
    norm.apply(t.s_next, b.next_obs.col(i).data());
    b.actions(0, i) = t.a.delta.x;
    b.actions(1, i) = t.a.delta.y;
    b.rewards(i) = reward_scale * t.r;
    b.not_done(i) = is_true_terminal(t) ? 0.0 : 1.0;
    b.sources.push_back(samples[static_cast<std::size_t>(i)].source);
  }
  return b;
}

inline Batch make_batch(const std::vector<Transition>& transitions, const ObsNormalizer& norm, double reward_scale,
                        SampleSource source = SampleSource::Rollout) {
  std::vector<SampledTransition> samples;
  samples.reserve(transitions.size());
  for (const auto& t : transitions) samples.push_back({&t, source});
  return make_batch(samples, norm, reward_scale);
}

inline Matrix critic_input(const Matrix& obs, const Matrix& actions) {
  Matrix x(obs.rows() + actions.rows(), obs.cols());
  x << obs, actions;
  return x;
}

inline Vector q_values(const net::Mlp& critic, const Matrix& obs, const Matrix& actions) {
  return net::forward(critic, critic_input(obs, actions)).row(0).transpose();
}

}  // namespace acl::rl
