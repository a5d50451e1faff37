#include "metapomdp/regimes.hpp"

#include "metapomdp/errors.hpp"

namespace metapomdp::regimes {

std::string to_string(RegimeKind kind) {
  return kind == RegimeKind::rl2 ? "rl2" : "rl1";
}

RegimeKind parse_regime(const std::string& name) {
  if (name == "rl2") return RegimeKind::rl2;
  if (name == "rl1") return RegimeKind::rl1;
  throw ConfigError("unknown regime '" + name + "' (expected rl2 or rl1)");
}

RegimeConfig make_regime(RegimeKind kind, const envs::EnvSpec& env) {
  RegimeConfig rc;
  rc.kind = kind;
  rc.action_count = 2;
  rc.observation_dim = envs::observation_dim(env);
  rc.task_count = 2;
  return rc;
}

Eigen::VectorXd build_agent_input(const RegimeConfig& rc, const envs::ObservationVector& obs,
                                  std::optional<int> prev_action, int task_id, int episode_index) {
  if (obs.dim() != rc.observation_dim) throw ShapeError("observation dimension does not match the regime");
  if (prev_action && (*prev_action < 0 || *prev_action >= rc.action_count)) {
    throw ShapeError("previous action out of range");
  }
  if (task_id < 0 || task_id >= rc.task_count) throw ShapeError("task id out of range");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(rc.input_dim());
  const Eigen::Index loc = obs.location.size();
  x.head(loc) = obs.location;
  x(loc) = obs.reward;
  if (prev_action) x(loc + 1 + *prev_action) = 1.0;
  if (rc.kind == RegimeKind::rl1 && episode_index >= 1) {
    x(rc.observation_dim + rc.action_count + task_id) = 1.0;
  }
  return x;
}

net::AgentState<double> on_episode_boundary(const RegimeConfig& rc, const net::AgentState<double>& s) {
  if (rc.kind == RegimeKind::rl2) return s;
  return net::AgentState<double>::zeros(static_cast<int>(s.h.size()));
}

}  // namespace metapomdp::regimes
