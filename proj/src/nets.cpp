#include "sorl/nets.hpp"

#include <memory>

namespace sorl {

FeatureScaling FeatureScaling::for_market(const MarketConfig& m, double reward_scale) {
  FeatureScaling fs;
  fs.budget_scale = std::max(m.B_max, 1.0);
  fs.horizon = m.T;
  fs.A_min = m.A_min;
  fs.A_max = m.A_max;
  fs.action_center = 0.5 * (m.A_min + m.A_max);
  fs.action_span = 0.5 * (m.A_max - m.A_min);
  fs.reward_scale = reward_scale;
  return fs;
}

namespace {

Net make_net(int inputs, const NetShape& shape, Activation head, Rng& rng) {
  std::vector<int> widths{inputs};
  std::vector<Activation> acts;
  for (int h : shape.hidden) {
    widths.push_back(h);
    acts.push_back(shape.hidden_activation);
  }
  widths.push_back(1);
  acts.push_back(head);
  Net net(widths, acts);
  net.init(rng);
  return net;
}

}  // namespace

Net make_critic(const NetShape& shape, Rng& rng) {
  return make_net(kStateFeatures + 1, shape, Activation::Identity, rng);
}

Net make_actor(const NetShape& shape, Rng& rng) {
  return make_net(kStateFeatures, shape, Activation::Sigmoid, rng);
}

Eigen::MatrixXd state_inputs(std::span<const BidState> states, const FeatureScaling& fs) {
  Eigen::MatrixXd x(kStateFeatures, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) fs.write_state(states[i], x.col(static_cast<Eigen::Index>(i)).data());
  return x;
}

Eigen::MatrixXd critic_inputs(std::span<const BidState> states, std::span<const double> actions,
                              const FeatureScaling& fs) {
  if (states.size() != actions.size()) throw ContractViolation("critic_inputs: states and actions differ in length");
  Eigen::MatrixXd x(kStateFeatures + 1, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    fs.write_state(states[i], x.col(c).data());
    x(kStateFeatures, c) = fs.action_feature(actions[i]);
  }
  return x;
}

Eigen::VectorXd q_values(const Net& critic, std::span<const BidState> states, std::span<const double> actions,
                         const FeatureScaling& fs) {
  return critic.forward(critic_inputs(states, actions, fs)).row(0).transpose();
}

double q_value(const Net& critic, const BidState& s, double a, const FeatureScaling& fs) {
  return q_values(critic, std::span(&s, 1), std::span(&a, 1), fs)(0);
}

Eigen::VectorXd q_row(const Net& critic, const BidState& s, std::span<const double> actions,
                      const FeatureScaling& fs) {
  Eigen::MatrixXd x(kStateFeatures + 1, static_cast<Eigen::Index>(actions.size()));
  double feat[kStateFeatures];
  fs.write_state(s, feat);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    for (int k = 0; k < kStateFeatures; ++k) x(k, i) = feat[k];
    x(kStateFeatures, i) = fs.action_feature(actions[static_cast<std::size_t>(i)]);
  }
  return critic.forward(x).row(0).transpose();
}

Eigen::VectorXd actor_actions(const Net& actor, std::span<const BidState> states, const FeatureScaling& fs) {
  Eigen::VectorXd y = actor.forward(state_inputs(states, fs)).row(0).transpose();
  return y.unaryExpr([&](double v) { return head_to_action(v, fs); });
}

double actor_action(const Net& actor, const BidState& s, const FeatureScaling& fs) {
  return actor_actions(actor, std::span(&s, 1), fs)(0);
}

Policy actor_policy(const Net& actor, const FeatureScaling& fs) {
  auto net = std::make_shared<const Net>(actor);
  return [net, fs](const BidState& s, Rng&) { return actor_action(*net, s, fs); };
}

}  // namespace sorl
