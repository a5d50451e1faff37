#include "metapomdp/net.hpp"

#include <set>

namespace metapomdp::net {

AgentParams init_params(const NetShape& shape, Rng& rng, InitScheme scheme, double range) {
  AgentParams p = AgentParams::zeros(shape);
  if (scheme == InitScheme::zero) return p;
  if (!(range > 0.0)) throw ConfigError("init range must be positive");
  std::uniform_real_distribution<double> draw(-range, range);
  const auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = draw(rng);
  };
  fill(p.lstm_wx);
  fill(p.lstm_wh);
  fill(p.policy_w);
  fill(p.value_w);
  return p;
}

PolicySample policy_sample(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng) {
  const Eigen::VectorXd logp = a2c::log_softmax(logits);
  const Eigen::VectorXd probs = logp.array().exp();
  PolicySample out;
  out.action = sample_categorical(rng, probs);
  out.log_prob = logp(out.action);
  return out;
}

PolicySample policy_greedy(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const Eigen::VectorXd logp = a2c::log_softmax(logits);
  PolicySample out;
  logp.maxCoeff(&out.action);
  out.log_prob = logp(out.action);
  return out;
}

std::vector<Eigen::Index> sample_coordinates(const NetShape& shape, int count, Rng& rng) {
  const AgentParams layout = AgentParams::zeros(shape);
  const Eigen::Index total = layout.size();
  std::vector<Eigen::Index> out;
  if (count >= total) {
    out.resize(total);
    for (Eigen::Index i = 0; i < total; ++i) out[i] = i;
    return out;
  }
  std::set<Eigen::Index> picked;
  Eigen::Index offset = 0;
  layout.visit([&](const char*, const auto& t) {
    std::uniform_int_distribution<Eigen::Index> pick(0, t.size() - 1);
    picked.insert(offset + pick(rng));
    offset += t.size();
  });
  std::uniform_int_distribution<Eigen::Index> any(0, total - 1);
  while (static_cast<int>(picked.size()) < count) picked.insert(any(rng));
  return {picked.begin(), picked.end()};
}

}  // namespace metapomdp::net
