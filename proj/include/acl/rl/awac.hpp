#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acl/error.hpp"
#include "acl/net/adam.hpp"
#include "acl/net/checkpoint.hpp"
#include "acl/net/mlp.hpp"
#include "acl/rl/batch.hpp"

namespace acl::rl {

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// Gaussian policy: tanh-squashed mean from an MLP, state-independent log-std.
struct GaussianActor {
  net::Mlp net;
  std::vector<double> log_std;

  int action_size() const { return net.output_size(); }

  double std_dev(std::size_t d) const { return std::exp(std::clamp(log_std[d], kMinLogStd, kMaxLogStd)); }
};

enum class SampleMode { Stochastic, Mean };

inline Matrix actor_mean(const GaussianActor& actor, const Matrix& obs, net::MlpCache* cache = nullptr) {
  return net::forward(actor.net, obs, cache).array().tanh().matrix();
}

/// Policy actions clipped to the action box.
inline Matrix sample_actions(const GaussianActor& actor, const Matrix& obs, Rng& rng,
                             SampleMode mode = SampleMode::Stochastic) {
  Matrix a = actor_mean(actor, obs);
  if (mode == SampleMode::Stochastic) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      for (Eigen::Index d = 0; d < a.rows(); ++d) a(d, j) += actor.std_dev(static_cast<std::size_t>(d)) * n01(rng);
    }
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

/// log pi(a|s) per column.
inline Vector log_prob(const GaussianActor& actor, const Matrix& obs, const Matrix& actions) {
  const Matrix mu = actor_mean(actor, obs);
  Vector out = Vector::Zero(obs.cols());
  for (Eigen::Index d = 0; d < mu.rows(); ++d) {
    const double ls = std::clamp(actor.log_std[static_cast<std::size_t>(d)], kMinLogStd, kMaxLogStd);
    const double var = std::exp(2.0 * ls);
    out.array() += -0.5 * (actions.row(d) - mu.row(d)).array().square().transpose() / var - ls -
                   0.5 * std::log(2.0 * std::numbers::pi);
  }
  return out;
}

struct AwacConfig {
  std::vector<int> hidden{256, 256};
  double gamma = 0.98;
  double lambda = 1.0;
  double tau = 0.005;
  int value_samples = 4;
  double weight_clip = 20.0;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int batch_size = 256;
  double reward_scale = 1e-3;
  double init_log_std = -0.5;
  bool critic_layer_norm = true;

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must be in (0, 1)");
    if (!(lambda > 0.0)) throw ValidationError("lambda must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau must be in (0, 1]");
    if (value_samples < 1) throw ValidationError("value_samples must be >= 1");
    if (batch_size < 2 || batch_size % 2 != 0) throw ValidationError("batch_size must be even and >= 2");
    if (!(weight_clip > 0.0)) throw ValidationError("weight_clip must be positive");
  }
};

struct LearnerState {
  GaussianActor actor;
  net::Mlp critic1, critic2;
  net::Mlp target1, target2;
  net::OptimizerState actor_opt, log_std_opt, critic1_opt, critic2_opt;
  AwacConfig config;
};

inline LearnerState make_learner(int obs_dim, int act_dim, const AwacConfig& config, Rng& rng) {
  config.validate();
  LearnerState l;
  l.config = config;
  l.actor.net = net::Mlp::make(obs_dim, config.hidden, act_dim, net::Activation::Relu, net::Activation::Linear, false);
  l.actor.net.init_uniform(rng, 1e-2);
  l.actor.log_std.assign(static_cast<std::size_t>(act_dim), config.init_log_std);
  for (auto* c : {&l.critic1, &l.critic2}) {
    *c = net::Mlp::make(obs_dim + act_dim, config.hidden, 1, net::Activation::Relu, net::Activation::Linear,
                        config.critic_layer_norm);
    c->init_uniform(rng);
  }
  l.target1 = l.critic1;
  l.target2 = l.critic2;
  l.actor_opt = net::OptimizerState(l.actor.net.num_params(), config.actor_lr);
  l.log_std_opt = net::OptimizerState(l.actor.log_std.size(), config.actor_lr);
  l.critic1_opt = net::OptimizerState(l.critic1.num_params(), config.critic_lr);
  l.critic2_opt = net::OptimizerState(l.critic2.num_params(), config.critic_lr);
  return l;
}

inline Vector min_q(const net::Mlp& a, const net::Mlp& b, const Matrix& obs, const Matrix& actions) {
  const Matrix x = critic_input(obs, actions);
  return net::forward(a, x).row(0).transpose().cwiseMin(net::forward(b, x).row(0).transpose());
}

/// y = r + gamma * not_done * min(Q'_1, Q'_2)(s', a') for given next actions.
inline Vector q_target_with_actions(const LearnerState& l, const Batch& b, const Matrix& next_actions) {
  const Vector q_next = min_q(l.target1, l.target2, b.next_obs, next_actions);
  return b.rewards + l.config.gamma * b.not_done.cwiseProduct(q_next);
}

inline Vector q_target(const LearnerState& l, const Batch& b, Rng& rng) {
  return q_target_with_actions(l, b, sample_actions(l.actor, b.next_obs, rng));
}

/// Mean squared error of one critic against fixed targets.
inline double critic_loss(const net::Mlp& critic, const Batch& b, const Vector& y) {
  return (q_values(critic, b.obs, b.actions) - y).squaredNorm() / static_cast<double>(b.size());
}

inline double critic_loss_grad(const net::Mlp& critic, const Batch& b, const Vector& y, std::span<double> grads) {
  net::MlpCache cache;
  const Matrix q = net::forward(critic, critic_input(b.obs, b.actions), &cache);
  const double n = static_cast<double>(b.size());
  const Matrix resid = q - y.transpose();
  net::backward(critic, cache, (2.0 / n) * resid, grads);
  return resid.squaredNorm() / n;
}

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

/// One Adam step per critic on the shared target, then Polyak update of the targets.
/// Returns the mean of the two critic losses.
inline double update_critics(LearnerState& l, const Batch& b, Rng& rng) {
  const Vector y = q_target(l, b, rng);
  double total = 0.0;
  for (int k = 0; k < 2; ++k) {
    net::Mlp& critic = k == 0 ? l.critic1 : l.critic2;
    net::OptimizerState& opt = k == 0 ? l.critic1_opt : l.critic2_opt;
    net::ParamVector grads(critic.num_params(), 0.0);
    const double loss = critic_loss_grad(critic, b, y, grads);
    require_finite(loss, "critic loss");
    net::adam_step(critic.params(), opt, grads);
    total += loss;
  }
  net::soft_update(l.target1.params(), l.critic1.params(), l.config.tau);
  net::soft_update(l.target2.params(), l.critic2.params(), l.config.tau);
  return 0.5 * total;
}

/// A(s,a) = min Q(s,a) - (1/M) sum_j min Q(s, a_j), a_j ~ pi(.|s).
inline Vector advantages(const LearnerState& l, const Matrix& obs, const Matrix& actions, Rng& rng,
                         SampleMode mode = SampleMode::Stochastic) {
  const Vector q = min_q(l.critic1, l.critic2, obs, actions);
  const int m = l.config.value_samples;
  const Eigen::Index n = obs.cols();
  // All M policy samples go through the critics in one batch.
  Matrix obs_rep(obs.rows(), n * m);
  for (int j = 0; j < m; ++j) obs_rep.middleCols(j * n, n) = obs;
  const Matrix a_rep = sample_actions(l.actor, obs_rep, rng, mode);
  const Vector q_rep = min_q(l.critic1, l.critic2, obs_rep, a_rep);
  Vector v = Vector::Zero(n);
  for (int j = 0; j < m; ++j) v += q_rep.segment(j * n, n);
  v /= static_cast<double>(m);
  return q - v;
}

inline double advantage(const LearnerState& l, const EnvState& s, Action a, const ObsNormalizer& norm, Rng& rng,
                        SampleMode mode = SampleMode::Stochastic) {
  const Matrix obs = norm(s);
  Matrix act(2, 1);
  act << a.delta.x, a.delta.y;
  return advantages(l, obs, act, rng, mode)(0);
}

/// w = min(exp(A / lambda), clip).
inline Vector awac_weights(const Vector& adv, double lambda, double clip) {
  return (adv.array() / lambda).exp().min(clip).matrix();
}

/// L = -(1/N) sum_i w_i log pi(a_i|s_i) and its gradient; weights are constants.
inline double actor_loss_grad(const GaussianActor& actor, const Matrix& obs, const Matrix& actions,
                              const Vector& weights, std::span<double> net_grads, std::span<double> log_std_grads) {
  net::MlpCache cache;
  const Matrix z = net::forward(actor.net, obs, &cache);
  const Matrix mu = z.array().tanh().matrix();
  const double n = static_cast<double>(obs.cols());
  Matrix dz(mu.rows(), mu.cols());
  double loss = 0.0;
  for (Eigen::Index d = 0; d < mu.rows(); ++d) {
    const auto du = static_cast<std::size_t>(d);
    const double raw = actor.log_std[du];
    const double ls = std::clamp(raw, kMinLogStd, kMaxLogStd);
    const double var = std::exp(2.0 * ls);
    const Eigen::ArrayXd diff = (actions.row(d) - mu.row(d)).transpose().array();
    const Eigen::ArrayXd lp = -0.5 * diff.square() / var - ls - 0.5 * std::log(2.0 * std::numbers::pi);
    loss -= (weights.array() * lp).sum() / n;
    // d(-w lp / n)/d mu = -(w / n) (a - mu) / var, then through tanh.
    const Eigen::ArrayXd dmu = -(weights.array() * diff) / (var * n);
    dz.row(d) = (dmu * (1.0 - mu.row(d).transpose().array().square())).transpose().matrix();
    if (!log_std_grads.empty() && raw > kMinLogStd && raw < kMaxLogStd) {
      log_std_grads[du] += -(weights.array() * (diff.square() / var - 1.0)).sum() / n;
    }
  }
  net::backward(actor.net, cache, dz, net_grads);
  return loss;
}

struct ActorStats {
  double loss = 0.0;
  double mean_weight = 0.0;
  double mean_advantage = 0.0;
};

inline ActorStats update_actor(LearnerState& l, const Batch& b, Rng& rng) {
  const Vector adv = advantages(l, b.obs, b.actions, rng);
  const Vector w = awac_weights(adv, l.config.lambda, l.config.weight_clip);
  net::ParamVector g_net(l.actor.net.num_params(), 0.0);
  std::vector<double> g_std(l.actor.log_std.size(), 0.0);
  ActorStats st;
  st.loss = actor_loss_grad(l.actor, b.obs, b.actions, w, g_net, g_std);
  require_finite(st.loss, "actor loss");
  net::adam_step(l.actor.net.params(), l.actor_opt, g_net);
  net::adam_step(l.actor.log_std, l.log_std_opt, g_std);
  st.mean_weight = w.mean();
  st.mean_advantage = adv.mean();
  return st;
}

inline net::Checkpoint to_checkpoint(const LearnerState& l) {
  net::Checkpoint ck;
  ck.meta["learner"] = "awac";
  ck.add_net(l.actor.net, "actor.");
  ck.add_vector("actor.log_std", l.actor.log_std);
  ck.add_net(l.critic1, "critic1.");
  ck.add_net(l.critic2, "critic2.");
  ck.add_net(l.target1, "target1.");
  ck.add_net(l.target2, "target2.");
  return ck;
}

inline void load_from_checkpoint(LearnerState& l, const net::Checkpoint& ck) {
  ck.load_net(l.actor.net, "actor.");
  const auto& ls = ck.at("actor.log_std");
  if (ls.values.size() != l.actor.log_std.size()) throw IoError("checkpoint log_std size mismatch");
  l.actor.log_std = ls.values;
  ck.load_net(l.critic1, "critic1.");
  ck.load_net(l.critic2, "critic2.");
  ck.load_net(l.target1, "target1.");
  ck.load_net(l.target2, "target2.");
}

}  // namespace acl::rl
