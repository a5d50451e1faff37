#pragma once

#include "metapomdp/envs.hpp"
#include "metapomdp/net.hpp"
#include "metapomdp/trajectory.hpp"

namespace metapomdp::a2c {

struct Hyperparams {
  double learning_rate = 1e-3;
  double discount = 0.80;
  double entropy_coef = 0.001;
  double grad_clip = 1.0;
  int episodes_per_trial = 10;
  double value_coef = 0.05;
  int trials_per_update = 16;
  int total_updates = 5000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  LossSpec loss_spec() const { return LossSpec{discount, value_coef, entropy_coef}; }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Per-environment defaults: bandit (lr 1e-3, discount 0.80, entropy 0.001, clip 1, K 10)
/// and gridworld (lr 1e-4, discount 0.90, entropy 0.01, clip 5, K 2); value coef 0.05 for both.
Hyperparams default_hyperparams(envs::EnvKind kind);

/// Loss terms of a recorded trajectory from its stored logits and values.
LossTerms a2c_loss(const Trajectory& traj, const Hyperparams& hp);

struct ClipResult {
  net::GradientBundle grads;
  double norm_before = 0.0;
};

/// Rescales to global L2 norm `max_norm` when above it.
ClipResult clip_global_norm(const net::GradientBundle& g, double max_norm);

/// Adam over all parameters with a single shared step counter.
class Adam {
 public:
  Adam(const net::NetShape& shape, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);
  explicit Adam(const net::NetShape& shape, const Hyperparams& hp)
      : Adam(shape, hp.learning_rate, hp.adam_beta1, hp.adam_beta2, hp.adam_epsilon) {}

  void step(net::AgentParams& params, const net::GradientBundle& grads);
  long steps_taken() const { return t_; }

 private:
  net::GradientBundle m_;
  net::GradientBundle v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Functional form of one Adam step.
net::AgentParams optimizer_step(const net::AgentParams& p, const net::GradientBundle& g, Adam& opt);

}  // namespace metapomdp::a2c
