#pragma once

// LSTM agent with policy and value heads, hand-derived BPTT and a
// finite-difference verifier. Everything is templated on the scalar type so
// the verifier can re-evaluate the loss in extended precision.

#include "metapomdp/errors.hpp"
#include "metapomdp/pomdp.hpp"
#include "metapomdp/trajectory.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace metapomdp::net {

inline constexpr int kHiddenSize = 48;

struct NetShape {
  int input_dim = 0;
  int hidden = kHiddenSize;
  int action_count = 2;

  bool operator==(const NetShape&) const = default;
};

/// All trainable tensors. Gate blocks of the stacked LSTM matrices are ordered
/// input, forget, candidate, output.
template <typename Scalar>
struct NetTensors {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix lstm_wx;   // 4H x I
  Matrix lstm_wh;   // 4H x H
  Vector lstm_b;    // 4H
  Matrix policy_w;  // A x H
  Vector policy_b;  // A
  Matrix value_w;   // 1 x H
  Vector value_b;   // 1

  static NetTensors zeros(const NetShape& s) {
    NetTensors t;
    t.lstm_wx = Matrix::Zero(4 * s.hidden, s.input_dim);
    t.lstm_wh = Matrix::Zero(4 * s.hidden, s.hidden);
    t.lstm_b = Vector::Zero(4 * s.hidden);
    t.policy_w = Matrix::Zero(s.action_count, s.hidden);
    t.policy_b = Vector::Zero(s.action_count);
    t.value_w = Matrix::Zero(1, s.hidden);
    t.value_b = Vector::Zero(1);
    return t;
  }

  NetShape shape() const {
    return NetShape{static_cast<int>(lstm_wx.cols()), static_cast<int>(lstm_wh.cols()),
                    static_cast<int>(policy_w.rows())};
  }

  /// Calls f(name, tensor) in a fixed order; the order defines flat coordinates.
  template <typename F>
  void visit(F&& f) {
    f("lstm_wx", lstm_wx);
    f("lstm_wh", lstm_wh);
    f("lstm_b", lstm_b);
    f("policy_w", policy_w);
    f("policy_b", policy_b);
    f("value_w", value_w);
    f("value_b", value_b);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<NetTensors*>(this)->visit([&](const char* name, const auto& t) { f(name, t); });
  }

  Eigen::Index size() const {
    Eigen::Index n = 0;
    visit([&](const char*, const auto& t) { n += t.size(); });
    return n;
  }

  Scalar& flat_coeff(Eigen::Index index) {
    Scalar* out = nullptr;
    visit([&](const char*, auto& t) {
      if (out == nullptr && index < t.size()) out = t.data() + index;  // column-major storage; any fixed order works
      else if (out == nullptr) index -= t.size();
    });
    if (out == nullptr) throw UsageError("flat parameter index out of range");
    return *out;
  }
  Scalar flat_coeff(Eigen::Index index) const { return const_cast<NetTensors&>(*this).flat_coeff(index); }

  Scalar squared_norm() const {
    Scalar n = 0;
    visit([&](const char*, const auto& t) { n += t.squaredNorm(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  void set_zero() {
    visit([](const char*, auto& t) { t.setZero(); });
  }

  NetTensors& operator+=(const NetTensors& o) {
    lstm_wx += o.lstm_wx;
    lstm_wh += o.lstm_wh;
    lstm_b += o.lstm_b;
    policy_w += o.policy_w;
    policy_b += o.policy_b;
    value_w += o.value_w;
    value_b += o.value_b;
    return *this;
  }

  NetTensors& operator*=(Scalar k) {
    visit([k](const char*, auto& t) { t *= k; });
    return *this;
  }

  template <typename Other>
  NetTensors<Other> cast() const {
    NetTensors<Other> out;
    out.lstm_wx = lstm_wx.template cast<Other>();
    out.lstm_wh = lstm_wh.template cast<Other>();
    out.lstm_b = lstm_b.template cast<Other>();
    out.policy_w = policy_w.template cast<Other>();
    out.policy_b = policy_b.template cast<Other>();
    out.value_w = value_w.template cast<Other>();
    out.value_b = value_b.template cast<Other>();
    return out;
  }
};

using AgentParams = NetTensors<double>;
using GradientBundle = NetTensors<double>;

template <typename Scalar>
struct AgentState {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector h;
  Vector c;

  static AgentState zeros(int hidden) { return AgentState{Vector::Zero(hidden), Vector::Zero(hidden)}; }
};

/// Logistic gates and tanh squashing.
struct StandardActivations {
  template <typename S>
  static S gate(S x) {
    return S(1) / (S(1) + std::exp(-x));
  }
  template <typename S>
  static S gate_grad(S y) {
    return y * (S(1) - y);
  }
  template <typename S>
  static S squash(S x) {
    return std::tanh(x);
  }
  template <typename S>
  static S squash_grad(S y) {
    return S(1) - y * y;
  }
};

/// Linearised cell used to test the gradient machinery on a polynomial loss path.
struct IdentityActivations {
  template <typename S>
  static S gate(S x) {
    return x;
  }
  template <typename S>
  static S gate_grad(S) {
    return S(1);
  }
  template <typename S>
  static S squash(S x) {
    return x;
  }
  template <typename S>
  static S squash_grad(S) {
    return S(1);
  }
};

enum class InitScheme { zero, small_uniform };

AgentParams init_params(const NetShape& shape, Rng& rng, InitScheme scheme, double range = 0.1);

/// Per-timestep activations kept for the backward pass, one column per step.
template <typename Scalar>
struct Unroll {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix x, h_prev, c_prev, gates, c, tanh_c, h, logits;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  int length = 0;

  void reserve(const NetShape& s, int steps) {
    const auto grow = [steps](Matrix& m, Eigen::Index rows) {
      if (m.rows() != rows) m.resize(rows, steps);
      else if (m.cols() < steps) m.conservativeResize(Eigen::NoChange, steps);
    };
    grow(x, s.input_dim);
    grow(h_prev, s.hidden);
    grow(c_prev, s.hidden);
    grow(gates, 4 * s.hidden);
    grow(c, s.hidden);
    grow(tanh_c, s.hidden);
    grow(h, s.hidden);
    grow(logits, s.action_count);
    if (values.size() < steps) values.conservativeResize(steps);
  }
  void clear() { length = 0; }
};

namespace detail {

template <typename Act, typename Scalar, typename XDerived, typename GateOut>
void lstm_gates(const NetTensors<Scalar>& p, const Eigen::MatrixBase<XDerived>& x,
                const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& h, GateOut&& gates) {
  const Eigen::Index n = p.lstm_wh.cols();
  gates.noalias() = p.lstm_b;
  gates.noalias() += p.lstm_wx * x;
  gates.noalias() += p.lstm_wh * h;
  for (Eigen::Index k = 0; k < 4 * n; ++k) {
    const bool candidate = k >= 2 * n && k < 3 * n;
    gates(k) = candidate ? Act::squash(gates(k)) : Act::gate(gates(k));
  }
}

}  // namespace detail

/// One cell update: c' = f*c + i*g, h' = o*squash(c').
template <typename Act = StandardActivations, typename Scalar, typename XDerived>
AgentState<Scalar> lstm_step(const NetTensors<Scalar>& p, const Eigen::MatrixBase<XDerived>& x,
                             const AgentState<Scalar>& s) {
  const Eigen::Index n = p.lstm_wh.cols();
  if (x.size() != p.lstm_wx.cols()) throw ShapeError("LSTM input has the wrong dimension");
  if (s.h.size() != n || s.c.size() != n) throw ShapeError("LSTM state has the wrong dimension");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> g(4 * n);
  detail::lstm_gates<Act>(p, x, s.h, g);
  AgentState<Scalar> out;
  out.c = g.segment(n, n).cwiseProduct(s.c) + g.segment(0, n).cwiseProduct(g.segment(2 * n, n));
  out.h = g.segment(3 * n, n).cwiseProduct(out.c.unaryExpr([](Scalar v) { return Act::squash(v); }));
  return out;
}

template <typename Scalar>
struct HeadsOutput {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> logits;
  Scalar value = 0;
};

template <typename Scalar, typename HDerived>
HeadsOutput<Scalar> heads_forward(const NetTensors<Scalar>& p, const Eigen::MatrixBase<HDerived>& h) {
  HeadsOutput<Scalar> out;
  out.logits = p.policy_w * h + p.policy_b;
  out.value = (p.value_w * h)(0) + p.value_b(0);
  return out;
}

/// softmax(logits) computed from the stabilised log-softmax.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  return a2c::log_softmax(logits).array().exp();
}

struct PolicySample {
  int action = 0;
  double log_prob = 0.0;
};

/// Samples from softmax(logits); log_prob is taken from the stabilised log-softmax.
PolicySample policy_sample(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng);

/// Argmax action (lowest index on ties) with its log-probability.
PolicySample policy_greedy(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Advances `u` by one step, recording what the backward pass needs.
/// `reset` zeroes the carried state first.
template <typename Act = StandardActivations, typename Scalar, typename XDerived>
void step_recorded(const NetTensors<Scalar>& p, const Eigen::MatrixBase<XDerived>& x, bool reset,
                   Unroll<Scalar>& u) {
  const NetShape shape = p.shape();
  if (x.size() != shape.input_dim) throw ShapeError("LSTM input has the wrong dimension");
  const int t = u.length;
  if (u.x.cols() <= t || u.x.rows() != shape.input_dim) u.reserve(shape, std::max(16, 2 * (t + 1)));
  const Eigen::Index n = shape.hidden;

  if (t == 0 || reset) {
    u.h_prev.col(t).setZero();
    u.c_prev.col(t).setZero();
  } else {
    u.h_prev.col(t) = u.h.col(t - 1);
    u.c_prev.col(t) = u.c.col(t - 1);
  }
  u.x.col(t) = x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> h_prev = u.h_prev.col(t);
  auto g = u.gates.col(t);
  detail::lstm_gates<Act>(p, u.x.col(t), h_prev, g);
  u.c.col(t) = g.segment(n, n).cwiseProduct(u.c_prev.col(t)) + g.segment(0, n).cwiseProduct(g.segment(2 * n, n));
  u.tanh_c.col(t) = u.c.col(t).unaryExpr([](Scalar v) { return Act::squash(v); });
  u.h.col(t) = g.segment(3 * n, n).cwiseProduct(u.tanh_c.col(t));
  u.logits.col(t).noalias() = p.policy_w * u.h.col(t);
  u.logits.col(t) += p.policy_b;
  u.values(t) = p.value_w.row(0).dot(u.h.col(t)) + p.value_b(0);
  u.length = t + 1;
}

/// Replays the recorded inputs of a trajectory.
template <typename Act = StandardActivations, typename Scalar>
Unroll<Scalar> forward_trial(const NetTensors<Scalar>& p, const a2c::Trajectory& traj) {
  traj.check_consistent();
  if (traj.inputs.rows() != p.lstm_wx.cols()) throw ShapeError("trajectory inputs do not match the network");
  Unroll<Scalar> u;
  u.reserve(p.shape(), std::max(1, traj.length()));
  for (int t = 0; t < traj.length(); ++t) {
    step_recorded<Act>(p, traj.inputs.col(t).template cast<Scalar>(), traj.reset_before[t] != 0, u);
  }
  return u;
}

/// Loss of a recorded forward pass; advantages use the trajectory's stored values.
template <typename Scalar>
a2c::LossTerms loss_from_unroll(const a2c::Trajectory& traj, const Unroll<Scalar>& u, const a2c::LossSpec& spec,
                                Scalar* total_out = nullptr) {
  const std::vector<double> returns = a2c::discounted_returns(traj.rewards, spec.discount);
  a2c::LossTerms out;
  Scalar total = 0;
  for (int t = 0; t < u.length; ++t) {
    const double adv = returns[t] - traj.values(t);
    const auto hl = a2c::head_loss<Scalar>(u.logits.col(t), u.values(t), traj.actions[t], adv, returns[t], spec);
    total += hl.policy + static_cast<Scalar>(spec.value_coef) * hl.value - static_cast<Scalar>(spec.entropy_coef) * hl.entropy;
    out.policy_loss += static_cast<double>(hl.policy);
    out.value_loss += static_cast<double>(hl.value);
    out.entropy += static_cast<double>(hl.entropy);
  }
  out.total = static_cast<double>(total);
  if (total_out != nullptr) *total_out = total;
  return out;
}

/// Total A2C loss of `traj` re-evaluated under `p`.
template <typename Act = StandardActivations, typename Scalar>
Scalar evaluate_loss(const NetTensors<Scalar>& p, const a2c::Trajectory& traj, const a2c::LossSpec& spec) {
  const Unroll<Scalar> u = forward_trial<Act>(p, traj);
  Scalar total = 0;
  loss_from_unroll(traj, u, spec, &total);
  return total;
}

/// Accumulates scale * dLoss/dparams into `grads` and returns the (unscaled)
/// loss terms. Gradient does not cross steps flagged in reset_before.
template <typename Act = StandardActivations, typename Scalar>
a2c::LossTerms backward_from_unroll(const NetTensors<Scalar>& p, const a2c::Trajectory& traj, const Unroll<Scalar>& u,
                                    const a2c::LossSpec& spec, Scalar scale, NetTensors<Scalar>& grads) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = p.lstm_wh.cols();
  const int steps = u.length;
  if (steps != traj.length()) throw ShapeError("unroll and trajectory lengths differ");

  const std::vector<double> returns = a2c::discounted_returns(traj.rewards, spec.discount);
  a2c::LossTerms terms;
  Scalar total = 0;

  Matrix dz(4 * n, steps);
  Matrix dlogits(p.policy_w.rows(), steps);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dvalues(steps);
  Vector dh_next = Vector::Zero(n);
  Vector dc_next = Vector::Zero(n);
  Vector dh(n), dc(n);

  for (int t = steps - 1; t >= 0; --t) {
    const double adv = returns[t] - traj.values(t);
    const auto hl = a2c::head_loss<Scalar>(u.logits.col(t), u.values(t), traj.actions[t], adv, returns[t], spec);
    total += hl.policy + static_cast<Scalar>(spec.value_coef) * hl.value - static_cast<Scalar>(spec.entropy_coef) * hl.entropy;
    terms.policy_loss += static_cast<double>(hl.policy);
    terms.value_loss += static_cast<double>(hl.value);
    terms.entropy += static_cast<double>(hl.entropy);

    dlogits.col(t) = scale * hl.dlogits;
    dvalues(t) = scale * hl.dvalue;

    dh.noalias() = p.policy_w.transpose() * dlogits.col(t);
    dh.noalias() += p.value_w.row(0).transpose() * dvalues(t);
    dh += dh_next;

    const auto g = u.gates.col(t);
    const auto in = g.segment(0, n);
    const auto fg = g.segment(n, n);
    const auto cand = g.segment(2 * n, n);
    const auto og = g.segment(3 * n, n);
    const auto tc = u.tanh_c.col(t);

    for (Eigen::Index k = 0; k < n; ++k) {
      dc(k) = dh(k) * og(k) * Act::squash_grad(tc(k)) + dc_next(k);
      dz(k, t) = dc(k) * cand(k) * Act::gate_grad(in(k));
      dz(n + k, t) = dc(k) * u.c_prev(k, t) * Act::gate_grad(fg(k));
      dz(2 * n + k, t) = dc(k) * in(k) * Act::squash_grad(cand(k));
      dz(3 * n + k, t) = dh(k) * tc(k) * Act::gate_grad(og(k));
    }

    if (traj.reset_before[t] != 0 || t == 0) {
      dh_next.setZero();
      dc_next.setZero();
    } else {
      dh_next.noalias() = p.lstm_wh.transpose() * dz.col(t);
      dc_next = dc.cwiseProduct(fg);
    }
  }

  const auto xs = u.x.leftCols(steps);
  const auto hs_prev = u.h_prev.leftCols(steps);
  const auto hs = u.h.leftCols(steps);
  grads.lstm_wx.noalias() += dz * xs.transpose();
  grads.lstm_wh.noalias() += dz * hs_prev.transpose();
  grads.lstm_b += dz.rowwise().sum();
  grads.policy_w.noalias() += dlogits * hs.transpose();
  grads.policy_b += dlogits.rowwise().sum();
  grads.value_w.noalias() += dvalues * hs.transpose();
  grads.value_b(0) += dvalues.sum();

  terms.total = static_cast<double>(total);
  return terms;
}

struct BackwardResult {
  GradientBundle grads;
  a2c::LossTerms loss;
};

/// Exact gradient of the trial's total A2C loss.
template <typename Act = StandardActivations>
BackwardResult bptt_backward(const AgentParams& p, const a2c::Trajectory& traj, const a2c::LossSpec& spec) {
  const Unroll<double> u = forward_trial<Act>(p, traj);
  BackwardResult out;
  out.grads = GradientBundle::zeros(p.shape());
  out.loss = backward_from_unroll<Act>(p, traj, u, spec, 1.0, out.grads);
  return out;
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  Eigen::Index worst_coordinate = -1;
  Eigen::Index coordinates_checked = 0;
};

/// Relative error used by the gradient check. Gradients smaller than
/// kGradCheckFloor in magnitude are compared against that floor.
inline constexpr double kGradCheckFloor = 1e-6;

inline double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences of the loss in long double at `coords`, compared to `grad`.
template <typename Act = StandardActivations>
GradCheckReport compare_to_finite_differences(const AgentParams& p, const a2c::Trajectory& traj,
                                              const a2c::LossSpec& spec, const GradientBundle& grad,
                                              const std::vector<Eigen::Index>& coords, double eps = 1e-5) {
  if (!(eps > 0.0)) throw UsageError("finite-difference step must be positive");
  NetTensors<long double> probe = p.cast<long double>();
  GradientBundle grad_copy = grad;
  GradCheckReport report;
  for (Eigen::Index k : coords) {
    long double& coeff = probe.flat_coeff(k);
    const long double saved = coeff;
    coeff = saved + eps;
    const long double up = evaluate_loss<Act>(probe, traj, spec);
    coeff = saved - eps;
    const long double down = evaluate_loss<Act>(probe, traj, spec);
    coeff = saved;
    const double numeric = static_cast<double>((up - down) / (2.0L * eps));
    const double err = gradient_relative_error(grad_copy.flat_coeff(k), numeric);
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_coordinate = k;
    }
    ++report.coordinates_checked;
  }
  return report;
}

/// Picks `count` distinct flat coordinates (all of them if count >= size),
/// always including at least one from every tensor.
std::vector<Eigen::Index> sample_coordinates(const NetShape& shape, int count, Rng& rng);

/// bptt_backward checked against central differences on sampled coordinates.
template <typename Act = StandardActivations>
GradCheckReport finite_diff_check(const AgentParams& p, const a2c::Trajectory& traj, const a2c::LossSpec& spec,
                                  Rng& rng, double eps = 1e-5, int coordinates = 200) {
  const BackwardResult analytic = bptt_backward<Act>(p, traj, spec);
  return compare_to_finite_differences<Act>(p, traj, spec, analytic.grads,
                                            sample_coordinates(p.shape(), coordinates, rng), eps);
}

}  // namespace metapomdp::net
