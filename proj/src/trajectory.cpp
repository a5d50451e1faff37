#include "metapomdp/trajectory.hpp"

#include "metapomdp/errors.hpp"

#include <numeric>

namespace metapomdp::a2c {

double Trajectory::total_reward() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

void Trajectory::check_consistent() const {
  const auto n = static_cast<std::size_t>(length());
  if (reset_before.size() != n || log_probs.size() != n || rewards.size() != n || episode_index.size() != n ||
      static_cast<std::size_t>(values.size()) != n || static_cast<std::size_t>(inputs.cols()) != n ||
      static_cast<std::size_t>(logits.cols()) != n) {
    throw ShapeError("trajectory fields have inconsistent lengths");
  }
  for (std::size_t t = 1; t < n; ++t) {
    if (episode_index[t] < episode_index[t - 1]) throw ShapeError("episode_index must be non-decreasing");
  }
  for (std::size_t t = 0; t < n; ++t) {
    if (actions[t] < 0 || actions[t] >= logits.rows()) throw ShapeError("trajectory action out of range");
  }
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double discount) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + discount * acc;
    g[t] = acc;
  }
  return g;
}

std::vector<double> advantages(const Trajectory& traj, double discount) {
  std::vector<double> adv = discounted_returns(traj.rewards, discount);
  for (std::size_t t = 0; t < adv.size(); ++t) adv[t] -= traj.values(static_cast<Eigen::Index>(t));
  return adv;
}

}  // namespace metapomdp::a2c
