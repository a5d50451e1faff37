#include "metapomdp/a2c.hpp"

#include "metapomdp/errors.hpp"

#include <cmath>

namespace metapomdp::a2c {

void Hyperparams::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef must be non-negative");
  if (!(value_coef >= 0.0)) throw ConfigError("value_coef must be non-negative");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
  if (episodes_per_trial < 1) throw ConfigError("episodes_per_trial must be positive");
  if (trials_per_update < 1) throw ConfigError("trials_per_update must be positive");
  if (total_updates < 0) throw ConfigError("total_updates must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam.epsilon must be positive");
}

Hyperparams default_hyperparams(envs::EnvKind kind) {
  Hyperparams hp;
  if (kind == envs::EnvKind::bandit) {
    hp.learning_rate = 1e-3;
    hp.discount = 0.80;
    hp.entropy_coef = 0.001;
    hp.grad_clip = 1.0;
    hp.episodes_per_trial = 10;
    hp.total_updates = 5000;
  } else {
    hp.learning_rate = 1e-4;
    hp.discount = 0.90;
    hp.entropy_coef = 0.01;
    hp.grad_clip = 5.0;
    hp.episodes_per_trial = 2;
    hp.total_updates = 20000;
  }
  hp.value_coef = 0.05;
  hp.trials_per_update = 16;
  return hp;
}

LossTerms a2c_loss(const Trajectory& traj, const Hyperparams& hp) {
  traj.check_consistent();
  const LossSpec spec = hp.loss_spec();
  const std::vector<double> returns = discounted_returns(traj.rewards, spec.discount);
  LossTerms out;
  for (int t = 0; t < traj.length(); ++t) {
    const double adv = returns[t] - traj.values(t);
    const auto hl = head_loss<double>(traj.logits.col(t), traj.values(t), traj.actions[t], adv, returns[t], spec);
    out.policy_loss += hl.policy;
    out.value_loss += hl.value;
    out.entropy += hl.entropy;
  }
  out.total = out.policy_loss + spec.value_coef * out.value_loss - spec.entropy_coef * out.entropy;
  return out;
}

ClipResult clip_global_norm(const net::GradientBundle& g, double max_norm) {
  if (!(max_norm > 0.0)) throw UsageError("clip norm must be positive");
  ClipResult out{g, std::sqrt(g.squared_norm())};
  if (out.norm_before > max_norm) out.grads *= max_norm / out.norm_before;
  return out;
}

Adam::Adam(const net::NetShape& shape, double learning_rate, double beta1, double beta2, double epsilon)
    : m_(net::GradientBundle::zeros(shape)),
      v_(net::GradientBundle::zeros(shape)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

void Adam::step(net::AgentParams& params, const net::GradientBundle& grads) {
  if (!(params.shape() == m_.shape()) || !(grads.shape() == m_.shape())) {
    throw ShapeError("optimizer, parameter and gradient shapes differ");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseAbs2();
    p.array() -= lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
  };
  update(params.lstm_wx, grads.lstm_wx, m_.lstm_wx, v_.lstm_wx);
  update(params.lstm_wh, grads.lstm_wh, m_.lstm_wh, v_.lstm_wh);
  update(params.lstm_b, grads.lstm_b, m_.lstm_b, v_.lstm_b);
  update(params.policy_w, grads.policy_w, m_.policy_w, v_.policy_w);
  update(params.policy_b, grads.policy_b, m_.policy_b, v_.policy_b);
  update(params.value_w, grads.value_w, m_.value_w, v_.value_w);
  update(params.value_b, grads.value_b, m_.value_b, v_.value_b);
}

net::AgentParams optimizer_step(const net::AgentParams& p, const net::GradientBundle& g, Adam& opt) {
  net::AgentParams out = p;
  opt.step(out, g);
  return out;
}

}  // namespace metapomdp::a2c
