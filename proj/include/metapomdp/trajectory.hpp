#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace metapomdp::a2c {

/// One trial as seen by the learner. Column t of `inputs`/`logits` belongs to timestep t.
struct Trajectory {
  Eigen::MatrixXd inputs;          // input_dim x T
  std::vector<char> reset_before;  // hidden state zeroed before step t (t = 0 always is)
  std::vector<int> actions;
  std::vector<double> log_probs;
  Eigen::VectorXd values;          // V_t recorded during the rollout
  Eigen::MatrixXd logits;          // action_count x T
  std::vector<double> rewards;
  std::vector<int> episode_index;
  int task_id = 0;

  int length() const { return static_cast<int>(actions.size()); }
  int episode_count() const { return episode_index.empty() ? 0 : episode_index.back() + 1; }
  double total_reward() const;

  /// Throws ShapeError when per-step fields disagree in length or ordering.
  void check_consistent() const;
};

struct LossSpec {
  double discount = 0.9;
  double value_coef = 0.05;
  double entropy_coef = 0.01;
};

struct LossTerms {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o) {
    policy_loss += o.policy_loss;
    value_loss += o.value_loss;
    entropy += o.entropy;
    total += o.total;
    return *this;
  }
};

/// G_t = r_t + discount * G_{t+1}, with G = 0 past the end of the trial.
/// Discounting runs straight across episode boundaries.
std::vector<double> discounted_returns(const std::vector<double>& rewards, double discount);

/// Advantages G_t - V_t using the values recorded in the trajectory; these
/// are constants as far as the policy loss is concerned.
std::vector<double> advantages(const Trajectory& traj, double discount);

/// log softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = logits.maxCoeff();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> shifted = logits.array() - m;
  const Scalar lse = std::log(shifted.array().exp().sum());
  return shifted.array() - lse;
}

/// Per-step A2C loss at the heads and its gradient with respect to the logits and value.
template <typename Scalar>
struct HeadLoss {
  Scalar policy = 0;
  Scalar value = 0;
  Scalar entropy = 0;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dlogits;
  Scalar dvalue = 0;
};

/// policy = -A log pi(a), value = (V - G)^2, entropy = H(pi).
/// Gradients are of policy + value_coef * value - entropy_coef * entropy.
template <typename Scalar, typename Derived>
HeadLoss<Scalar> head_loss(const Eigen::MatrixBase<Derived>& logits, Scalar value, int action, double advantage,
                           double target, const LossSpec& spec) {
  HeadLoss<Scalar> out;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logp = log_softmax(logits);
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> probs = logp.array().exp();
  const Scalar adv = static_cast<Scalar>(advantage);
  out.policy = -adv * logp(action);
  out.value = (value - static_cast<Scalar>(target)) * (value - static_cast<Scalar>(target));
  out.entropy = -(probs.array() * logp.array()).sum();

  out.dlogits = adv * probs;
  out.dlogits(action) -= adv;
  out.dlogits.array() += static_cast<Scalar>(spec.entropy_coef) * probs.array() * (logp.array() + out.entropy);
  out.dvalue = static_cast<Scalar>(2.0 * spec.value_coef) * (value - static_cast<Scalar>(target));
  return out;
}

}  // namespace metapomdp::a2c
