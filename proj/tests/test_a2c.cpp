#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metapomdp/a2c.hpp"
#include "metapomdp/errors.hpp"
#include "metapomdp/harness.hpp"

#include <cmath>

using namespace metapomdp;
using namespace metapomdp::a2c;

namespace {

// Every field of the bundle set to `v`, except one coordinate.
net::GradientBundle filled(const net::NetShape& shape, double v) {
  net::GradientBundle g = net::GradientBundle::zeros(shape);
  for (Eigen::Index k = 0; k < g.size(); ++k) g.flat_coeff(k) = v;
  return g;
}

Trajectory uniform_trajectory(int steps) {
  Trajectory t;
  t.inputs = Eigen::MatrixXd::Zero(3, steps);
  t.logits = Eigen::MatrixXd::Zero(2, steps);
  t.values = Eigen::VectorXd::Zero(steps);
  for (int i = 0; i < steps; ++i) {
    t.reset_before.push_back(i == 0);
    t.actions.push_back(i % 2);
    t.log_probs.push_back(std::log(0.5));
    t.rewards.push_back(i % 3 == 0 ? 1.0 : 0.0);
    t.episode_index.push_back(i);
  }
  return t;
}

}  // namespace

TEST_CASE("discounted returns") {
  const std::vector<double> g = discounted_returns(std::vector<double>(10, 1.0), 0.8);
  CHECK(g[0] == doctest::Approx((1.0 - std::pow(0.8, 10)) / 0.2).epsilon(1e-14));
  CHECK(g[0] == doctest::Approx(4.46313).epsilon(1e-6));

  std::vector<double> last(7, 0.0);
  last.back() = 3.0;
  CHECK(discounted_returns(last, 0.9)[0] == doctest::Approx(std::pow(0.9, 6) * 3.0).epsilon(1e-14));

  const std::vector<double> r{0.5, -1.0, 2.0};
  CHECK(discounted_returns(r, 0.0) == r);
  CHECK(discounted_returns({}, 0.9).empty());

  Rng rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> rs(40);
  for (double& x : rs) x = u(rng);
  const std::vector<double> gs = discounted_returns(rs, 0.9);
  for (std::size_t t = 0; t + 1 < rs.size(); ++t) CHECK(gs[t] == doctest::Approx(rs[t] + 0.9 * gs[t + 1]).epsilon(1e-14));
  CHECK(gs.back() == rs.back());
}

TEST_CASE("a2c_loss examples") {
  Hyperparams hp = default_hyperparams(envs::EnvKind::bandit);
  Trajectory t = uniform_trajectory(10);
  const std::vector<double> g = discounted_returns(t.rewards, hp.discount);
  for (int i = 0; i < 10; ++i) t.values(i) = g[i];
  LossTerms l = a2c_loss(t, hp);
  CHECK(l.policy_loss == 0.0);
  CHECK(l.value_loss == 0.0);
  CHECK(l.entropy == doctest::Approx(10.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(l.entropy == doctest::Approx(6.931).epsilon(1e-4));

  t.values.setZero();
  l = a2c_loss(t, hp);
  double pl = 0.0, vl = 0.0;
  for (int i = 0; i < 10; ++i) {
    pl += -g[i] * std::log(0.5);
    vl += g[i] * g[i];
  }
  CHECK(l.policy_loss == doctest::Approx(pl).epsilon(1e-14));
  CHECK(l.value_loss == doctest::Approx(vl).epsilon(1e-14));
  CHECK(std::abs(l.total - (l.policy_loss + 0.05 * l.value_loss - 0.001 * l.entropy)) <= 1e-12);
}

TEST_CASE("loss decomposition holds on agent trajectories") {
  for (envs::EnvKind env : {envs::EnvKind::bandit, envs::EnvKind::corridor}) {
    const harness::Setup s(envs::default_spec(env), regimes::RegimeKind::rl2);
    const Hyperparams hp = default_hyperparams(env);
    Rng rng(5);
    const net::AgentParams p =
        net::init_params({s.regime.input_dim(), net::kHiddenSize, 2}, rng, net::InitScheme::small_uniform, 0.5);
    for (int i = 0; i < 20; ++i) {
      const Trajectory t = harness::run_trial(p, s, i % 2, rng).traj;
      const LossTerms l = a2c_loss(t, hp);
      CHECK(std::abs(l.total - (l.policy_loss + hp.value_coef * l.value_loss - hp.entropy_coef * l.entropy)) <= 1e-12);
      const net::BackwardResult b = net::bptt_backward(p, t, hp.loss_spec());
      CHECK(b.loss.total == doctest::Approx(l.total).epsilon(1e-12));
    }
  }
}

TEST_CASE("advantage is detached from the value head") {
  const harness::Setup s(envs::default_spec(envs::EnvKind::bandit), regimes::RegimeKind::rl2);
  Rng rng(6);
  const net::AgentParams p =
      net::init_params({s.regime.input_dim(), net::kHiddenSize, 2}, rng, net::InitScheme::small_uniform, 0.5);
  const Trajectory t = harness::run_trial(p, s, 1, rng).traj;
  const LossSpec policy_only{0.8, 0.0, 0.0};
  const net::BackwardResult b = net::bptt_backward(p, t, policy_only);
  CHECK(b.grads.value_w.isZero(0.0));
  CHECK(b.grads.value_b.isZero(0.0));
  CHECK_FALSE(b.grads.policy_w.isZero(0.0));
}

TEST_CASE("global norm clipping") {
  const net::NetShape shape{2, 3, 2};
  net::GradientBundle g = net::GradientBundle::zeros(shape);
  g.lstm_wx(0, 0) = 2.0;
  ClipResult r = clip_global_norm(g, 1.0);
  CHECK(r.norm_before == doctest::Approx(2.0));
  CHECK(std::sqrt(r.grads.squared_norm()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.grads.lstm_wx(0, 0) == doctest::Approx(1.0));

  g.lstm_wx(0, 0) = 0.5;
  r = clip_global_norm(g, 1.0);
  for (Eigen::Index k = 0; k < g.size(); ++k) CHECK(r.grads.flat_coeff(k) == g.flat_coeff(k));

  const net::GradientBundle big = filled(shape, 0.7);
  const ClipResult once = clip_global_norm(big, 5.0);
  const ClipResult twice = clip_global_norm(once.grads, 5.0);
  for (Eigen::Index k = 0; k < big.size(); ++k) {
    CHECK(twice.grads.flat_coeff(k) == doctest::Approx(once.grads.flat_coeff(k)).epsilon(1e-14));
    CHECK(once.grads.flat_coeff(k) == doctest::Approx(big.flat_coeff(k) * 5.0 / std::sqrt(big.squared_norm())));
  }
  CHECK_THROWS_AS(clip_global_norm(big, 0.0), UsageError);
}

TEST_CASE("per-environment hyperparameter defaults") {
  const Hyperparams b = default_hyperparams(envs::EnvKind::bandit);
  CHECK(b.learning_rate == 1e-3);
  CHECK(b.discount == 0.80);
  CHECK(b.entropy_coef == 0.001);
  CHECK(b.grad_clip == 1.0);
  CHECK(b.episodes_per_trial == 10);
  CHECK(b.value_coef == 0.05);
  const Hyperparams c = default_hyperparams(envs::EnvKind::corridor);
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.discount == 0.90);
  CHECK(c.entropy_coef == 0.01);
  CHECK(c.grad_clip == 5.0);
  CHECK(c.episodes_per_trial == 2);
  CHECK(c.value_coef == 0.05);

  Hyperparams bad = b;
  bad.discount = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = b;
  bad.grad_clip = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = b;
  bad.entropy_coef = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Adam") {
  const net::NetShape shape{3, 4, 2};
  Rng rng(1);
  const net::AgentParams p = net::init_params(shape, rng, net::InitScheme::small_uniform);
  Adam opt(shape, 1e-3);
  net::AgentParams q = optimizer_step(p, net::GradientBundle::zeros(shape), opt);
  for (Eigen::Index k = 0; k < p.size(); ++k) REQUIRE(q.flat_coeff(k) == p.flat_coeff(k));

  // Bias correction makes the first step lr * g / (|g| + eps) on each touched coordinate.
  Adam fresh(shape, 1e-3);
  net::GradientBundle g = net::GradientBundle::zeros(shape);
  g.policy_w(1, 2) = 0.37;
  q = optimizer_step(p, g, fresh);
  CHECK(p.policy_w(1, 2) - q.policy_w(1, 2) == doctest::Approx(1e-3 * 0.37 / (0.37 + 1e-8)).epsilon(1e-9));
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (q.flat_coeff(k) != p.flat_coeff(k)) CHECK(&q.flat_coeff(k) == &q.policy_w(1, 2));
  }
  CHECK(fresh.steps_taken() == 1);

  // Moments persist: a second identical step is again of size lr.
  net::AgentParams r = optimizer_step(q, g, fresh);
  CHECK(q.policy_w(1, 2) - r.policy_w(1, 2) == doctest::Approx(1e-3).epsilon(1e-6));

  const net::AgentParams other = net::AgentParams::zeros(net::NetShape{5, 4, 2});
  CHECK_THROWS_AS(optimizer_step(other, g, fresh), ShapeError);
}
