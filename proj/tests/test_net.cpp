#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metapomdp/checkpoint.hpp"
#include "metapomdp/errors.hpp"
#include "metapomdp/harness.hpp"
#include "metapomdp/net.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace metapomdp;
using namespace metapomdp::net;
using regimes::RegimeKind;

namespace {

struct Case {
  envs::EnvKind env;
  RegimeKind regime;
};

const Case kCases[] = {{envs::EnvKind::bandit, RegimeKind::rl2},
                       {envs::EnvKind::bandit, RegimeKind::rl1},
                       {envs::EnvKind::corridor, RegimeKind::rl2},
                       {envs::EnvKind::corridor, RegimeKind::rl1}};

NetShape shape_for(const harness::Setup& s) {
  return NetShape{s.regime.input_dim(), kHiddenSize, s.regime.action_count};
}

// A short corridor keeps random-policy trials small enough for exhaustive checks.
harness::Setup make_setup(envs::EnvKind env, RegimeKind regime, int bandit_k = 10) {
  envs::EnvSpec spec = envs::default_spec(env);
  if (env == envs::EnvKind::corridor) {
    spec.corridor_length = 5;
    spec.corridor_start = 2;
    spec.corridor_step_cap = 8;
  } else {
    spec.episodes_per_trial = bandit_k;
  }
  return harness::Setup(spec, regime);
}

a2c::Trajectory random_trial(const AgentParams& p, const harness::Setup& s, std::uint64_t seed) {
  Rng rng(seed);
  return harness::run_trial(p, s, static_cast<int>(seed % 2), rng).traj;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

a2c::Trajectory slice(const a2c::Trajectory& t, int from, int to) {
  a2c::Trajectory out;
  const int n = to - from;
  out.inputs = t.inputs.middleCols(from, n);
  out.logits = t.logits.middleCols(from, n);
  out.values = t.values.segment(from, n);
  out.reset_before.assign(t.reset_before.begin() + from, t.reset_before.begin() + to);
  out.reset_before[0] = 1;
  out.actions.assign(t.actions.begin() + from, t.actions.begin() + to);
  out.log_probs.assign(t.log_probs.begin() + from, t.log_probs.begin() + to);
  out.rewards.assign(t.rewards.begin() + from, t.rewards.begin() + to);
  const int base = t.episode_index[from];
  for (int i = from; i < to; ++i) out.episode_index.push_back(t.episode_index[i] - base);
  out.task_id = t.task_id;
  return out;
}

double max_abs_diff(const GradientBundle& a, const GradientBundle& b) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a.flat_coeff(k) - b.flat_coeff(k)));
  return worst;
}

}  // namespace

TEST_CASE("zero parameters give half-open gates and a zero state") {
  const NetShape shape{5, kHiddenSize, 2};
  const AgentParams p = AgentParams::zeros(shape);
  Eigen::VectorXd g(4 * kHiddenSize);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -2.0, 3.0);
  const AgentState<double> s0 = AgentState<double>::zeros(kHiddenSize);
  const AgentState<double> s1 = lstm_step(p, x, s0);
  CHECK(s1.h.isZero(0.0));
  CHECK(s1.c.isZero(0.0));

  Unroll<double> u;
  step_recorded(p, x, true, u);
  CHECK((u.gates.col(0).segment(0, kHiddenSize).array() == 0.5).all());
  CHECK((u.gates.col(0).segment(kHiddenSize, kHiddenSize).array() == 0.5).all());
  CHECK((u.gates.col(0).segment(2 * kHiddenSize, kHiddenSize).array() == 0.0).all());
  CHECK((u.gates.col(0).segment(3 * kHiddenSize, kHiddenSize).array() == 0.5).all());
}

TEST_CASE("lstm_step matches a hand-computed two-unit cell") {
  const NetShape shape{3, 2, 2};
  Rng rng(42);
  const AgentParams p = init_params(shape, rng, InitScheme::small_uniform, 0.8);
  AgentParams pb = p;
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int k = 0; k < 8; ++k) pb.lstm_b(k) = u(rng);

  const double x[3] = {0.3, -1.2, 0.7};
  const double h[2] = {0.25, -0.4};
  const double c[2] = {-0.6, 0.9};
  AgentState<double> s{Eigen::Vector2d(h[0], h[1]), Eigen::Vector2d(c[0], c[1])};
  const AgentState<double> out = lstm_step(pb, Eigen::Vector3d(x[0], x[1], x[2]), s);

  for (int j = 0; j < 2; ++j) {
    double pre[4];
    for (int gate = 0; gate < 4; ++gate) {
      const int row = gate * 2 + j;
      double z = pb.lstm_b(row);
      for (int k = 0; k < 3; ++k) z += pb.lstm_wx(row, k) * x[k];
      for (int k = 0; k < 2; ++k) z += pb.lstm_wh(row, k) * h[k];
      pre[gate] = z;
    }
    const double i = sigmoid(pre[0]);
    const double f = sigmoid(pre[1]);
    const double g = std::tanh(pre[2]);
    const double o = sigmoid(pre[3]);
    const double c_new = f * c[j] + i * g;
    const double h_new = o * std::tanh(c_new);
    CHECK(out.c(j) == doctest::Approx(c_new).epsilon(1e-14));
    CHECK(out.h(j) == doctest::Approx(h_new).epsilon(1e-14));
  }
}

TEST_CASE("hidden activations stay strictly inside (-1, 1)") {
  const NetShape shape{4, kHiddenSize, 2};
  Rng rng(3);
  std::normal_distribution<double> big(0.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    const AgentParams p = init_params(shape, rng, InitScheme::small_uniform, 3.0);
    AgentState<double> s = AgentState<double>::zeros(kHiddenSize);
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd x(4);
      for (int k = 0; k < 4; ++k) x(k) = big(rng);
      s = lstm_step(p, x, s);
      CHECK(s.h.cwiseAbs().maxCoeff() < 1.0);
    }
  }
}

TEST_CASE("lstm_step rejects mismatched shapes") {
  const AgentParams p = AgentParams::zeros(NetShape{3, 4, 2});
  CHECK_THROWS_AS(lstm_step(p, Eigen::VectorXd::Zero(2), AgentState<double>::zeros(4)), ShapeError);
  CHECK_THROWS_AS(lstm_step(p, Eigen::VectorXd::Zero(3), AgentState<double>::zeros(5)), ShapeError);
}

TEST_CASE("heads and softmax") {
  const AgentParams p = AgentParams::zeros(NetShape{3, kHiddenSize, 2});
  const HeadsOutput<double> out = heads_forward(p, Eigen::VectorXd::Constant(kHiddenSize, 0.3));
  CHECK(out.logits.isZero(0.0));
  CHECK(out.value == 0.0);
  const Eigen::VectorXd uniform = softmax(out.logits);
  CHECK(uniform(0) == doctest::Approx(0.5));
  CHECK(uniform(1) == doctest::Approx(0.5));
  const Eigen::VectorXd pr = softmax(Eigen::Vector2d(std::log(3.0), 0.0));
  CHECK(pr(0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(pr(1) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("policy_sample frequencies, stability and determinism") {
  Rng rng(11);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += policy_sample(Eigen::Vector2d(0.0, 0.0), rng).action == 0;
  CHECK(std::abs(zeros / 10000.0 - 0.5) <= 0.02);

  for (int i = 0; i < 100; ++i) {
    const PolicySample s = policy_sample(Eigen::Vector2d(1000.0, 0.0), rng);
    CHECK(s.action == 0);
    CHECK(std::isfinite(s.log_prob));
    CHECK(s.log_prob == doctest::Approx(0.0));
  }
  const PolicySample g = policy_greedy(Eigen::Vector2d(-1.0, 2.0));
  CHECK(g.action == 1);

  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    CHECK(policy_sample(Eigen::Vector2d(0.2, -0.1), a).action == policy_sample(Eigen::Vector2d(0.2, -0.1), b).action);
  }
}

TEST_CASE("init schemes") {
  const NetShape shape{6, kHiddenSize, 2};
  Rng rng(1);
  const AgentParams z = init_params(shape, rng, InitScheme::zero);
  for (Eigen::Index k = 0; k < z.size(); ++k) REQUIRE(z.flat_coeff(k) == 0.0);

  const AgentParams u = init_params(shape, rng, InitScheme::small_uniform, 0.1);
  CHECK(u.lstm_wx.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(u.lstm_wh.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(u.policy_w.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(u.value_w.cwiseAbs().maxCoeff() <= 0.1);
  CHECK(u.lstm_wx.cwiseAbs().maxCoeff() > 0.0);
  CHECK(u.lstm_b.isZero(0.0));
  CHECK(u.policy_b.isZero(0.0));
  CHECK(u.value_b.isZero(0.0));

  Rng r1(9), r2(9);
  const AgentParams a = init_params(shape, r1, InitScheme::small_uniform);
  const AgentParams b = init_params(shape, r2, InitScheme::small_uniform);
  for (Eigen::Index k = 0; k < a.size(); ++k) REQUIRE(a.flat_coeff(k) == b.flat_coeff(k));
}

TEST_CASE("finite differences agree with BPTT in every env and regime") {
  for (const Case& c : kCases) {
    CAPTURE(envs::to_string(c.env));
    CAPTURE(regimes::to_string(c.regime));
    const harness::Setup s = make_setup(c.env, c.regime);
    Rng rng(17);
    const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.5);
    const a2c::Trajectory traj = random_trial(p, s, 4);
    const a2c::LossSpec spec = a2c::default_hyperparams(c.env).loss_spec();
    const GradCheckReport rep = finite_diff_check(p, traj, spec, rng, 1e-5, 200);
    CHECK(rep.coordinates_checked == 200);
    CHECK(rep.max_relative_error <= 1e-4);
  }
}

TEST_CASE("finite differences on a random five-step bandit trial") {
  const harness::Setup s = make_setup(envs::EnvKind::bandit, RegimeKind::rl2, 5);
  Rng rng(23);
  const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.5);
  const a2c::Trajectory traj = random_trial(p, s, 7);
  REQUIRE(traj.length() == 5);
  const GradCheckReport rep = finite_diff_check(p, traj, a2c::default_hyperparams(envs::EnvKind::bandit).loss_spec(),
                                                rng, 1e-5, 1 << 30);
  CHECK(rep.coordinates_checked == p.size());
  CHECK(rep.max_relative_error <= 1e-4);
}

TEST_CASE("identity activations agree to near machine precision") {
  const harness::Setup s = make_setup(envs::EnvKind::bandit, RegimeKind::rl2, 3);
  Rng rng(31);
  const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.1);
  const a2c::Trajectory traj = random_trial(p, s, 2);
  // Linear cell: the only curvature left is in the log-softmax and squared-error heads.
  const a2c::LossSpec spec{0.8, 0.05, 0.0};
  const GradCheckReport rep = finite_diff_check<IdentityActivations>(p, traj, spec, rng, 1e-5, 400);
  CHECK(rep.max_relative_error <= 1e-8);
}

TEST_CASE("a sign-flipped gradient fails the check") {
  for (const Case& c : kCases) {
    const harness::Setup s = make_setup(c.env, c.regime);
    Rng rng(17);
    const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.5);
    const a2c::Trajectory traj = random_trial(p, s, 4);
    const a2c::LossSpec spec = a2c::default_hyperparams(c.env).loss_spec();
    BackwardResult r = bptt_backward(p, traj, spec);
    r.grads.lstm_wx *= -1.0;
    Rng coord_rng(2);
    const GradCheckReport rep =
        compare_to_finite_differences(p, traj, spec, r.grads, sample_coordinates(p.shape(), 200, coord_rng));
    CHECK(rep.max_relative_error >= 0.1);
  }
}

TEST_CASE("zero advantage and zero entropy leave the policy head without gradient") {
  const harness::Setup s = make_setup(envs::EnvKind::corridor, RegimeKind::rl2);
  Rng rng(8);
  const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.3);
  a2c::Trajectory traj = random_trial(p, s, 1);
  const a2c::LossSpec spec{0.9, 0.05, 0.0};
  const std::vector<double> g = a2c::discounted_returns(traj.rewards, spec.discount);
  for (int t = 0; t < traj.length(); ++t) traj.values(t) = g[t];
  const BackwardResult r = bptt_backward(p, traj, spec);
  CHECK(r.grads.policy_w.isZero(0.0));
  CHECK(r.grads.policy_b.isZero(0.0));
  CHECK(r.loss.policy_loss == 0.0);

  // With the value head detached too, nothing reaches the LSTM.
  AgentParams no_value = p;
  no_value.value_w.setZero();
  const BackwardResult r2 = bptt_backward(no_value, traj, spec);
  CHECK(r2.grads.lstm_wx.isZero(0.0));
  CHECK(r2.grads.lstm_wh.isZero(0.0));
}

TEST_CASE("an RL1 reset blocks gradient flow across the episode boundary") {
  // With discount 0 each step's loss only involves its own reward, so the
  // gradient splits across episodes exactly when the recurrent path is cut.
  const a2c::LossSpec spec{0.0, 0.05, 0.01};
  for (RegimeKind kind : {RegimeKind::rl1, RegimeKind::rl2}) {
    const harness::Setup s = make_setup(envs::EnvKind::corridor, kind);
    Rng rng(12);
    const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 0.5);
    a2c::Trajectory traj = random_trial(p, s, 6);
    int boundary = 0;
    while (traj.episode_index[boundary] == 0) ++boundary;
    REQUIRE(boundary > 0);
    REQUIRE(boundary < traj.length());

    const GradientBundle full = bptt_backward(p, traj, spec).grads;
    GradientBundle parts = bptt_backward(p, slice(traj, 0, boundary), spec).grads;
    parts += bptt_backward(p, slice(traj, boundary, traj.length()), spec).grads;
    if (kind == RegimeKind::rl1) {
      CHECK(max_abs_diff(full, parts) <= 1e-12);
    } else {
      CHECK(max_abs_diff(full, parts) > 1e-6);
    }

    // Perturbing episode-one inputs leaves the episode-two contribution untouched.
    if (kind == RegimeKind::rl1) {
      a2c::Trajectory perturbed = traj;
      perturbed.inputs.leftCols(boundary).array() += 0.37;
      const GradientBundle full_p = bptt_backward(p, perturbed, spec).grads;
      const GradientBundle first_p = bptt_backward(p, slice(perturbed, 0, boundary), spec).grads;
      GradientBundle second = first_p;
      second *= -1.0;
      second += full_p;
      const GradientBundle second_ref = bptt_backward(p, slice(traj, boundary, traj.length()), spec).grads;
      CHECK(max_abs_diff(second, second_ref) <= 1e-12);
    }
  }
}

TEST_CASE("zero init gives exactly zero weight-matrix gradients") {
  for (const Case& c : kCases) {
    const harness::Setup s = make_setup(c.env, c.regime);
    Rng rng(0);
    const AgentParams p = init_params(shape_for(s), rng, InitScheme::zero);
    const a2c::Trajectory traj = random_trial(p, s, 3);
    const Unroll<double> u = forward_trial(p, traj);
    CHECK(u.h.leftCols(u.length).isZero(0.0));
    const BackwardResult r = bptt_backward(p, traj, a2c::default_hyperparams(c.env).loss_spec());
    CHECK(r.grads.lstm_wx.isZero(0.0));
    CHECK(r.grads.lstm_wh.isZero(0.0));
    CHECK(r.grads.policy_w.isZero(0.0));
    CHECK(r.grads.value_w.isZero(0.0));
  }
}

TEST_CASE("forward and backward stay finite over 1000 random trials") {
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Case& c = kCases[trial % 4];
    const harness::Setup s = make_setup(c.env, c.regime);
    Rng rng(1000 + trial);
    const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform, 2.0);
    const a2c::Trajectory traj = random_trial(p, s, trial);
    const BackwardResult r = bptt_backward(p, traj, a2c::default_hyperparams(c.env).loss_spec());
    REQUIRE(traj.logits.allFinite());
    REQUIRE(traj.values.allFinite());
    REQUIRE(r.grads.all_finite());
    REQUIRE(std::isfinite(r.loss.total));
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("mismatched trajectory is a shape error") {
  const harness::Setup s = make_setup(envs::EnvKind::bandit, RegimeKind::rl2);
  Rng rng(0);
  const AgentParams p = init_params(shape_for(s), rng, InitScheme::small_uniform);
  const a2c::Trajectory traj = random_trial(p, s, 0);
  const AgentParams other = init_params(NetShape{7, kHiddenSize, 2}, rng, InitScheme::small_uniform);
  CHECK_THROWS_AS(bptt_backward(other, traj, a2c::LossSpec{}), ShapeError);
  a2c::Trajectory broken = traj;
  broken.rewards.pop_back();
  CHECK_THROWS_AS(bptt_backward(p, broken, a2c::LossSpec{}), ShapeError);
}

TEST_CASE("checkpoints round trip bit for bit") {
  const NetShape shape{15, kHiddenSize, 2};
  Rng rng(77);
  const AgentParams p = init_params(shape, rng, InitScheme::small_uniform, 0.3);
  const std::string path = (std::filesystem::temp_directory_path() / "metapomdp_test_ckpt.bin").string();
  save_checkpoint(p, path);
  const AgentParams q = load_checkpoint(path);
  REQUIRE(q.shape() == shape);
  for (Eigen::Index k = 0; k < p.size(); ++k) REQUIRE(p.flat_coeff(k) == q.flat_coeff(k));

  {
    std::ofstream junk(path, std::ios::binary | std::ios::trunc);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
