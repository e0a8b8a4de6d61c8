#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "acl/rl/awac.hpp"
#include "acl/rl/ddpgfd.hpp"

using namespace acl;
using namespace acl::rl;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// Network whose output is the constant `value` for every input.
net::Mlp constant_net(int in, double value, bool layer_norm) {
  net::Mlp m = net::Mlp::make(in, {8}, 1, net::Activation::Relu, net::Activation::Linear, layer_norm);
  m.bias(1)(0) = value;
  return m;
}

// Q(s, a) = a_x: single linear layer reading the first action coordinate.
net::Mlp action_x_critic(int obs_dim) {
  net::Mlp m = net::Mlp::make(obs_dim + 2, {}, 1);
  m.weight(0)(0, obs_dim) = 1.0;
  return m;
}

Batch random_batch(int obs_dim, Eigen::Index n, Rng& rng) {
  Batch b;
  b.obs = random_matrix(obs_dim, n, rng, 0.5);
  b.next_obs = random_matrix(obs_dim, n, rng, 0.5);
  b.actions = random_matrix(2, n, rng, 0.4).cwiseMax(-1.0).cwiseMin(1.0);
  b.rewards = Vector::Constant(n, -1e-3);
  b.not_done = Vector::Ones(n);
  b.not_done(0) = 0.0;
  b.sources.assign(static_cast<std::size_t>(n), SampleSource::Rollout);
  for (Eigen::Index i = 0; i < n; i += 2) b.sources[static_cast<std::size_t>(i)] = SampleSource::Demo;
  return b;
}

AwacConfig small_config() {
  AwacConfig c;
  c.hidden = {16, 16};
  c.batch_size = 8;
  return c;
}

double fd_rel_err(double fd, double analytic) { return std::abs(fd - analytic) / std::max(1.0, std::abs(fd)); }

// Standard normal pdf/cdf for the clipped-Gaussian expectation oracle.
double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST(AwacTarget, NonTerminalBootstrapsFromMinTarget) {
  Rng rng(1);
  LearnerState l = make_learner(2, 2, small_config(), rng);
  l.target1 = constant_net(4, 10.0, true);
  l.target2 = constant_net(4, 12.0, true);
  Transition t;
  t.s = {{0.0, 0.0}, std::nullopt};
  t.s_next = {{0.02, 0.0}, std::nullopt};
  t.r = -1.0;
  const Batch b = make_batch(std::vector<Transition>{t}, ObsNormalizer{}, 1.0);
  const Vector y = q_target(l, b, rng);
  EXPECT_NEAR(y(0), 8.8, 1e-12);
}

TEST(AwacTarget, TerminalDoesNotBootstrap) {
  Rng rng(2);
  LearnerState l = make_learner(2, 2, small_config(), rng);
  l.target1 = constant_net(4, 10.0, true);
  l.target2 = constant_net(4, 10.0, true);
  Transition goal;
  goal.r = kGoalReward;
  goal.terminal = true;
  goal.cause = TerminalCause::Goal;
  goal.s = goal.s_next = {{0.0, 0.0}, std::nullopt};
  Transition timeout = goal;
  timeout.r = kStepReward;
  timeout.cause = TerminalCause::Timeout;
  const Batch b = make_batch(std::vector<Transition>{goal, timeout}, ObsNormalizer{}, 1.0);
  const Vector y = q_target(l, b, rng);
  EXPECT_DOUBLE_EQ(y(0), 1000.0);
  // A timeout truncates the episode but the state is not absorbing.
  EXPECT_NEAR(y(1), 8.8, 1e-12);
}

TEST(AwacCritic, LossMatchesScalarLoop) {
  Rng rng(3);
  LearnerState l = make_learner(4, 2, small_config(), rng);
  const Batch b = random_batch(4, 9, rng);
  const Vector y = random_matrix(9, 1, rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    Matrix x(6, 1);
    x << b.obs.col(i), b.actions.col(i);
    const double q = net::forward(l.critic1, x)(0, 0);
    acc += (q - y(i)) * (q - y(i));
  }
  EXPECT_NEAR(critic_loss(l.critic1, b, y), acc / 9.0, 1e-12);
}

TEST(AwacCritic, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  LearnerState l = make_learner(4, 2, small_config(), rng);
  const Batch b = random_batch(4, 6, rng);
  const Vector y = random_matrix(6, 1, rng);
  std::vector<double> g(l.critic1.num_params(), 0.0);
  critic_loss_grad(l.critic1, b, y, g);
  auto p = l.critic1.params();
  const double h = 1e-6;
  for (std::size_t i = 0; i < p.size(); i += 3) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = critic_loss(l.critic1, b, y);
    p[i] = keep - h;
    const double down = critic_loss(l.critic1, b, y);
    p[i] = keep;
    EXPECT_LE(fd_rel_err((up - down) / (2 * h), g[i]), 1e-4) << i;
  }
}

TEST(AwacCritic, UnitTauCopiesCriticsIntoTargets) {
  Rng rng(5);
  AwacConfig c = small_config();
  c.tau = 1.0;
  LearnerState l = make_learner(4, 2, c, rng);
  const Batch b = random_batch(4, 8, rng);
  update_critics(l, b, rng);
  EXPECT_TRUE(std::equal(l.target1.params().begin(), l.target1.params().end(), l.critic1.params().begin()));
  EXPECT_TRUE(std::equal(l.target2.params().begin(), l.target2.params().end(), l.critic2.params().begin()));
}

TEST(AwacCritic, RepeatedUpdatesFitFixedTargets) {
  Rng rng(6);
  AwacConfig c = small_config();
  c.critic_lr = 3e-3;
  LearnerState l = make_learner(4, 2, c, rng);
  const Batch b = random_batch(4, 16, rng);
  const Vector y = random_matrix(16, 1, rng, 0.5);
  const double before = critic_loss(l.critic1, b, y);
  for (int k = 0; k < 300; ++k) {
    std::vector<double> g(l.critic1.num_params(), 0.0);
    critic_loss_grad(l.critic1, b, y, g);
    net::adam_step(l.critic1.params(), l.critic1_opt, g);
  }
  EXPECT_LT(critic_loss(l.critic1, b, y), 0.1 * before);
}

TEST(AwacAdvantage, ConstantCriticGivesZeroAdvantage) {
  Rng rng(7);
  LearnerState l = make_learner(4, 2, small_config(), rng);
  l.critic1 = constant_net(6, 3.0, true);
  l.critic2 = constant_net(6, 5.0, true);
  const Batch b = random_batch(4, 10, rng);
  const Vector a = advantages(l, b.obs, b.actions, rng);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AwacAdvantage, MeanModeAtPolicyMeanIsZeroForLinearCritic) {
  Rng rng(8);
  LearnerState l = make_learner(2, 2, small_config(), rng);
  l.critic1 = action_x_critic(2);
  l.critic2 = action_x_critic(2);
  const Matrix obs = random_matrix(2, 5, rng);
  const Matrix mu = actor_mean(l.actor, obs);
  EXPECT_LE(advantages(l, obs, mu, rng, SampleMode::Mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AwacAdvantage, MatchesClippedGaussianExpectation) {
  Rng rng(9);
  AwacConfig c = small_config();
  c.value_samples = 200000;
  c.init_log_std = std::log(0.6);
  LearnerState l = make_learner(2, 2, c, rng);
  l.critic1 = action_x_critic(2);
  l.critic2 = action_x_critic(2);
  const Matrix obs = Matrix::Constant(2, 1, 0.3);
  const double mu = actor_mean(l.actor, obs)(0, 0);
  const double s = 0.6;
  // E[clip(X, -1, 1)], X ~ N(mu, s^2), in closed form.
  const double a = (-1.0 - mu) / s, b = (1.0 - mu) / s;
  const double expected = -Phi(a) + (1.0 - Phi(b)) + mu * (Phi(b) - Phi(a)) + s * (phi(a) - phi(b));
  Matrix act(2, 1);
  act << 0.5, 0.0;
  const double adv = advantages(l, obs, act, rng)(0);
  // Monte Carlo standard error is below 0.6 / sqrt(2e5) ~ 1.4e-3.
  EXPECT_NEAR(adv, 0.5 - expected, 6e-3);
}

TEST(AwacWeights, ExponentialClipAndScaleInvariance) {
  Vector a(4);
  a << 1.0, 0.0, -2.0, 10.0;
  const Vector w = awac_weights(a, 1.0, 20.0);
  EXPECT_NEAR(w(0), std::numbers::e, 1e-15);
  EXPECT_DOUBLE_EQ(w(1), 1.0);
  EXPECT_NEAR(w(2), std::exp(-2.0), 1e-15);
  EXPECT_DOUBLE_EQ(w(3), 20.0);
  for (double k : {0.5, 3.0, 100.0}) {
    const Vector wk = awac_weights(k * a, k * 1.0, 20.0);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(wk(i), w(i), 1e-12 * w(i));
  }
  Rng rng(10);
  const Vector r = random_matrix(100, 1, rng, 3.0);
  const Vector wr = awac_weights(r, 0.7, 20.0);
  for (Eigen::Index i = 0; i < 100; ++i) {
    for (Eigen::Index j = 0; j < 100; ++j) {
      if (r(i) < r(j)) {
        EXPECT_LE(wr(i), wr(j));
      }
    }
  }
}

TEST(AwacActor, LogProbMatchesClosedForm) {
  Rng rng(11);
  LearnerState l = make_learner(2, 2, small_config(), rng);
  l.actor.log_std = {-0.3, 0.1};
  const Matrix obs = random_matrix(2, 4, rng);
  const Matrix act = random_matrix(2, 4, rng, 0.3);
  const Matrix mu = actor_mean(l.actor, obs);
  const Vector lp = log_prob(l.actor, obs, act);
  for (Eigen::Index j = 0; j < 4; ++j) {
    double e = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double s = std::exp(l.actor.log_std[static_cast<std::size_t>(d)]);
      const double z = (act(d, j) - mu(d, j)) / s;
      e += -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    EXPECT_NEAR(lp(j), e, 1e-12);
  }
}

TEST(AwacActor, LossAndGradientMatchOracle) {
  Rng rng(12);
  LearnerState l = make_learner(4, 2, small_config(), rng);
  l.actor.net.init_uniform(rng);
  l.actor.log_std = {-0.4, 0.2};
  const Batch b = random_batch(4, 7, rng);
  const Vector w = awac_weights(random_matrix(7, 1, rng), 1.0, 20.0);
  auto loss_of = [&](const GaussianActor& actor) { return -(w.array() * log_prob(actor, b.obs, b.actions).array()).mean(); };

  std::vector<double> g_net(l.actor.net.num_params(), 0.0), g_std(2, 0.0);
  const double loss = actor_loss_grad(l.actor, b.obs, b.actions, w, g_net, g_std);
  EXPECT_NEAR(loss, loss_of(l.actor), 1e-12);

  const double h = 1e-6;
  auto p = l.actor.net.params();
  for (std::size_t i = 0; i < p.size(); i += 2) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss_of(l.actor);
    p[i] = keep - h;
    const double down = loss_of(l.actor);
    p[i] = keep;
    EXPECT_LE(fd_rel_err((up - down) / (2 * h), g_net[i]), 1e-4) << i;
  }
  for (std::size_t d = 0; d < 2; ++d) {
    GaussianActor up = l.actor, down = l.actor;
    up.log_std[d] += h;
    down.log_std[d] -= h;
    EXPECT_LE(fd_rel_err((loss_of(up) - loss_of(down)) / (2 * h), g_std[d]), 1e-4);
  }
}

TEST(AwacActor, ClampedLogStdHasNoGradient) {
  Rng rng(13);
  LearnerState l = make_learner(2, 2, small_config(), rng);
  l.actor.log_std = {-7.0, 3.0};
  EXPECT_DOUBLE_EQ(l.actor.std_dev(0), std::exp(kMinLogStd));
  EXPECT_DOUBLE_EQ(l.actor.std_dev(1), std::exp(kMaxLogStd));
  const Batch b = random_batch(2, 4, rng);
  std::vector<double> g_net(l.actor.net.num_params(), 0.0), g_std(2, 0.0);
  actor_loss_grad(l.actor, b.obs, b.actions, Vector::Ones(4), g_net, g_std);
  EXPECT_EQ(g_std[0], 0.0);
  EXPECT_EQ(g_std[1], 0.0);
}

TEST(AwacActor, WeightedRegressionMovesMeanTowardHighAdvantageAction) {
  Rng rng(14);
  AwacConfig c = small_config();
  c.actor_lr = 1e-2;
  LearnerState l = make_learner(2, 2, c, rng);
  l.critic1 = action_x_critic(2);
  l.critic2 = action_x_critic(2);
  // Half the data pushes +x (high Q), half -x (low Q).
  Batch b;
  b.obs = Matrix::Zero(2, 8);
  b.next_obs = b.obs;
  b.actions = Matrix::Zero(2, 8);
  for (int i = 0; i < 8; ++i) b.actions(0, i) = i % 2 == 0 ? 0.8 : -0.8;
  b.rewards = Vector::Zero(8);
  b.not_done = Vector::Ones(8);
  b.sources.assign(8, SampleSource::Rollout);
  for (int k = 0; k < 200; ++k) update_actor(l, b, rng);
  EXPECT_GT(actor_mean(l.actor, Matrix::Zero(2, 1))(0, 0), 0.3);
}

TEST(AwacCheckpoint, RoundTripRestoresPolicy) {
  Rng rng(15);
  LearnerState l = make_learner(4, 2, small_config(), rng);
  l.actor.log_std = {-1.0, -2.0};
  const auto ck = to_checkpoint(l);
  Rng rng2(99);
  LearnerState other = make_learner(4, 2, small_config(), rng2);
  load_from_checkpoint(other, ck);
  const Matrix obs = random_matrix(4, 3, rng);
  EXPECT_EQ(actor_mean(other.actor, obs), actor_mean(l.actor, obs));
  EXPECT_EQ(other.actor.log_std, l.actor.log_std);
  EXPECT_EQ(to_checkpoint(other), ck);
}

TEST(AwacConfig, RejectsInvalidValues) {
  AwacConfig c;
  c.batch_size = 7;
  EXPECT_THROW(c.validate(), ValidationError);
  c = AwacConfig{};
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = AwacConfig{};
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(DdpgfdActor, GradientMatchesFiniteDifferences) {
  Rng rng(16);
  DdpgConfig c;
  c.hidden = {12, 12};
  DdpgLearner l = make_ddpg_learner(4, 2, c, rng);
  l.actor.init_uniform(rng);
  const Batch b = random_batch(4, 8, rng);
  std::vector<double> g(l.actor.num_params(), 0.0);
  ddpg_actor_loss_grad(l.actor, l.critic1, b, 1.0, g);
  auto loss_of = [&] {
    std::vector<double> scratch(l.actor.num_params(), 0.0);
    return ddpg_actor_loss_grad(l.actor, l.critic1, b, 1.0, scratch);
  };
  const double h = 1e-6;
  auto p = l.actor.params();
  int checked = 0;
  for (std::size_t i = 0; i < p.size(); i += 3) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = loss_of();
    p[i] = keep - h;
    const double down = loss_of();
    p[i] = keep;
    EXPECT_LE(fd_rel_err((up - down) / (2 * h), g[i]), 1e-4) << i;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(DdpgfdActor, QFilterUsesOnlyBetterDemoActions) {
  Rng rng(17);
  DdpgConfig c;
  c.hidden = {8};
  DdpgLearner l = make_ddpg_learner(2, 2, c, rng);
  const net::Mlp critic = action_x_critic(2);
  Batch b;
  b.obs = Matrix::Zero(2, 4);
  b.next_obs = b.obs;
  b.actions.resize(2, 4);
  b.actions << 1.0, -1.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0;
  b.rewards = Vector::Zero(4);
  b.not_done = Vector::Ones(4);
  b.sources = {SampleSource::Demo, SampleSource::Demo, SampleSource::Rollout, SampleSource::Rollout};
  std::vector<double> g(l.actor.num_params(), 0.0);
  int active = -1;
  const double loss = ddpg_actor_loss_grad(l.actor, critic, b, 1.0, g, &active);
  // The near-zero initial policy is beaten only by the +x demo action.
  EXPECT_EQ(active, 1);
  const Matrix pi = ddpg_actions(l.actor, b.obs);
  const double expected = -pi.row(0).sum() / 4.0 + (pi.col(0) - b.actions.col(0)).squaredNorm() / 4.0;
  EXPECT_NEAR(loss, expected, 1e-12);
}

TEST(DdpgfdTarget, UsesTargetActorAndMasksTerminals) {
  Rng rng(18);
  DdpgConfig c;
  c.hidden = {8};
  DdpgLearner l = make_ddpg_learner(2, 2, c, rng);
  l.target1 = constant_net(4, 4.0, true);
  l.target2 = constant_net(4, 6.0, true);
  Batch b = random_batch(2, 3, rng);
  b.rewards << 0.5, 0.5, 0.5;
  b.not_done << 0.0, 1.0, 1.0;
  const Vector y = ddpg_q_target(l, b);
  EXPECT_DOUBLE_EQ(y(0), 0.5);
  EXPECT_NEAR(y(1), 0.5 + 0.98 * 4.0, 1e-12);
}
