#pragma once

#include <random>
#include <span>
#include <vector>

#include "acl/buffers.hpp"
#include "acl/net/adam.hpp"
#include "acl/net/checkpoint.hpp"
#include "acl/net/mlp.hpp"
#include "acl/rl/awac.hpp"
#include "acl/rl/batch.hpp"

namespace acl::rl {

/// Deterministic-actor learner with a Q-filtered behaviour cloning term on demo samples.
struct DdpgConfig {
  std::vector<int> hidden{256, 256};
  double gamma = 0.98;
  double tau = 0.005;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int batch_size = 256;
  double reward_scale = 1e-3;
  double exploration_std = 0.1;
  double bc_weight = 1.0;
  bool critic_layer_norm = true;
};

struct DdpgLearner {
  net::Mlp actor;  // tanh output
  net::Mlp target_actor;
  net::Mlp critic1, critic2, target1, target2;
  net::OptimizerState actor_opt, critic1_opt, critic2_opt;
  DdpgConfig config;
};

inline DdpgLearner make_ddpg_learner(int obs_dim, int act_dim, const DdpgConfig& config, Rng& rng) {
  DdpgLearner l;
  l.config = config;
  l.actor = net::Mlp::make(obs_dim, config.hidden, act_dim, net::Activation::Relu, net::Activation::Tanh, false);
  l.actor.init_uniform(rng, 1e-2);
  l.target_actor = l.actor;
  for (auto* c : {&l.critic1, &l.critic2}) {
    *c = net::Mlp::make(obs_dim + act_dim, config.hidden, 1, net::Activation::Relu, net::Activation::Linear,
                        config.critic_layer_norm);
    c->init_uniform(rng);
  }
  l.target1 = l.critic1;
  l.target2 = l.critic2;
  l.actor_opt = net::OptimizerState(l.actor.num_params(), config.actor_lr);
  l.critic1_opt = net::OptimizerState(l.critic1.num_params(), config.critic_lr);
  l.critic2_opt = net::OptimizerState(l.critic2.num_params(), config.critic_lr);
  return l;
}

inline Matrix ddpg_actions(const net::Mlp& actor, const Matrix& obs) { return net::forward(actor, obs); }

inline Vector ddpg_q_target(const DdpgLearner& l, const Batch& b) {
  const Vector q_next = min_q(l.target1, l.target2, b.next_obs, ddpg_actions(l.target_actor, b.next_obs));
  return b.rewards + l.config.gamma * b.not_done.cwiseProduct(q_next);
}

/// L = -(1/N) sum_i Q1(s_i, pi(s_i))
///     + bc_weight (1/N) sum_{i in demo, Q1(s_i, a_i) > Q1(s_i, pi(s_i))} ||pi(s_i) - a_i||^2
inline double ddpg_actor_loss_grad(const net::Mlp& actor, const net::Mlp& critic, const Batch& b, double bc_weight,
                                   std::span<double> grads, int* bc_active = nullptr) {
  net::MlpCache actor_cache;
  const Matrix pi = net::forward(actor, b.obs, &actor_cache);
  net::MlpCache critic_cache;
  const Matrix q_pi = net::forward(critic, critic_input(b.obs, pi), &critic_cache);
  const Vector q_demo = q_values(critic, b.obs, b.actions);
  const double n = static_cast<double>(b.size());

  double loss = -q_pi.sum() / n;
  const Matrix dq = Matrix::Constant(1, b.size(), -1.0 / n);
  const Matrix d_in = net::backward(critic, critic_cache, dq, {});
  Matrix d_pi = d_in.bottomRows(pi.rows());
  int active = 0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    if (b.sources[static_cast<std::size_t>(i)] != SampleSource::Demo) continue;
    if (!(q_demo(i) > q_pi(0, i))) continue;
    ++active;
    const Vector diff = pi.col(i) - b.actions.col(i);
    loss += bc_weight * diff.squaredNorm() / n;
    d_pi.col(i) += bc_weight * 2.0 * diff / n;
  }
  net::backward(actor, actor_cache, d_pi, grads);
  if (bc_active) *bc_active = active;
  return loss;
}

struct DdpgStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  int bc_active = 0;
};

inline DdpgStats ddpg_update(DdpgLearner& l, const Batch& b) {
  DdpgStats st;
  const Vector y = ddpg_q_target(l, b);
  for (int k = 0; k < 2; ++k) {
    net::Mlp& critic = k == 0 ? l.critic1 : l.critic2;
    net::OptimizerState& opt = k == 0 ? l.critic1_opt : l.critic2_opt;
    net::ParamVector g(critic.num_params(), 0.0);
    const double loss = critic_loss_grad(critic, b, y, g);
    require_finite(loss, "critic loss");
    net::adam_step(critic.params(), opt, g);
    st.critic_loss += 0.5 * loss;
  }
  net::ParamVector g(l.actor.num_params(), 0.0);
  st.actor_loss = ddpg_actor_loss_grad(l.actor, l.critic1, b, l.config.bc_weight, g, &st.bc_active);
  require_finite(st.actor_loss, "actor loss");
  net::adam_step(l.actor.params(), l.actor_opt, g);
  net::soft_update(l.target1.params(), l.critic1.params(), l.config.tau);
  net::soft_update(l.target2.params(), l.critic2.params(), l.config.tau);
  net::soft_update(l.target_actor.params(), l.actor.params(), l.config.tau);
  return st;
}

inline net::Checkpoint to_checkpoint(const DdpgLearner& l) {
  net::Checkpoint ck;
  ck.meta["learner"] = "ddpgfd_bc";
  ck.add_net(l.actor, "actor.");
  ck.add_net(l.target_actor, "target_actor.");
  ck.add_net(l.critic1, "critic1.");
  ck.add_net(l.critic2, "critic2.");
  ck.add_net(l.target1, "target1.");
  ck.add_net(l.target2, "target2.");
  return ck;
}

inline void load_from_checkpoint(DdpgLearner& l, const net::Checkpoint& ck) {
  ck.load_net(l.actor, "actor.");
  ck.load_net(l.target_actor, "target_actor.");
  ck.load_net(l.critic1, "critic1.");
  ck.load_net(l.critic2, "critic2.");
  ck.load_net(l.target1, "target1.");
  ck.load_net(l.target2, "target2.");
}

}  // namespace acl::rl
