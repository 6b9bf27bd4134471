#pragma once

#include <span>
#include <vector>

#include "sorl/approx.hpp"
#include "sorl/market.hpp"

namespace sorl {

/// Maps raw states and bids to network inputs, and rewards to critic units.
struct FeatureScaling {
  double budget_scale = 1.0;  ///< divides budget_left and budget_consumed
  int horizon = 96;           ///< divides time_left
  double A_min = 0.0;
  double A_max = 1.0;
  double action_center = 0.5;  ///< bid mapped to input 0
  double action_span = 0.5;    ///< bid offset mapped to input +-1
  double reward_scale = 1.0;   ///< critic outputs are in reward * reward_scale units

  static FeatureScaling for_market(const MarketConfig& m, double reward_scale);

  double action_feature(double a) const noexcept { return (a - action_center) / action_span; }
  void write_state(const BidState& s, double* out) const noexcept {
    out[0] = s.budget_left / budget_scale;
    out[1] = static_cast<double>(s.time_left) / horizon;
    out[2] = s.budget_consumed / budget_scale;
  }
};

constexpr int kStateFeatures = 3;

struct NetShape {
  std::vector<int> hidden{64, 64};
  Activation hidden_activation = Activation::Tanh;
};

/// Q network: inputs (state features, bid feature), one linear output.
Net make_critic(const NetShape& shape, Rng& rng);
/// Policy network: state features in, sigmoid head rescaled to [A_min, A_max].
Net make_actor(const NetShape& shape, Rng& rng);

Eigen::MatrixXd state_inputs(std::span<const BidState> states, const FeatureScaling& fs);
Eigen::MatrixXd critic_inputs(std::span<const BidState> states, std::span<const double> actions,
                              const FeatureScaling& fs);

Eigen::VectorXd q_values(const Net& critic, std::span<const BidState> states, std::span<const double> actions,
                         const FeatureScaling& fs);
double q_value(const Net& critic, const BidState& s, double a, const FeatureScaling& fs);
/// Q at one state for many bids.
Eigen::VectorXd q_row(const Net& critic, const BidState& s, std::span<const double> actions,
                      const FeatureScaling& fs);

/// Maps the actor's (0,1) head to a bid.
inline double head_to_action(double y, const FeatureScaling& fs) noexcept {
  return fs.A_min + (fs.A_max - fs.A_min) * y;
}
Eigen::VectorXd actor_actions(const Net& actor, std::span<const BidState> states, const FeatureScaling& fs);
double actor_action(const Net& actor, const BidState& s, const FeatureScaling& fs);

/// Deterministic policy backed by a private copy of the actor.
Policy actor_policy(const Net& actor, const FeatureScaling& fs);

}  // namespace sorl
