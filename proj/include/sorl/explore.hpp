#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sorl/market.hpp"
#include "sorl/nets.hpp"

namespace sorl {

/// Bid interval around the safe action, active on steps t1..t2.
struct SafetyZone {
  double radius = 0.5;
  int t1 = 0;
  int t2 = 95;

  int window() const noexcept { return t2 - t1 + 1; }
  bool active(int t) const noexcept { return t >= t1 && t <= t2; }
  void validate(int T) const;
};

struct SerConfig {
  double sigma = 1.0;
  double lambda = 0.1;
  int candidates = 1000;

  void validate() const;
};

/// Q values at one state for a list of bids (critic output units).
using QRow = std::function<Eigen::VectorXd(const BidState&, std::span<const double>)>;
QRow critic_row(const Net& critic, const FeatureScaling& fs);

/// eps_s / (L_Q * gamma^t1 * window)
double safety_radius(double eps_s, double L_Q, double gamma, int t1, int window);

struct LipschitzConstants {
  double k1 = 0.0;  ///< stage-1 admissions per unit bid
  double k2 = 0.0;  ///< stage-2 admissions per unit bid
  double k3 = 0.0;  ///< |dQ/d budget_left|, value per currency
  double k4 = 0.0;  ///< |dQ/d budget_consumed|
  double L_r = 0.0;
  double L_Q = 0.0;
  double max_reward_slope = 0.0;  ///< largest observed |dr/da| on the bid grid
  int states = 0;
};

/// Fills L_r = (k1 + k2) v_M and L_Q = (v_M + gamma (k3 + k4) p_M)(k1 + k2).
LipschitzConstants with_bounds(LipschitzConstants k, double v_M, double p_M, double gamma);

struct ConstantEstimation {
  int episodes = 4;        ///< rollouts of the policy that supply states
  int states_per_episode = 12;
  int bid_grid = 200;      ///< bids spread evenly over [A_min, A_max]
  double budget_step = 0.0;  ///< finite-difference step on budget; 0 picks 1e-3 of the budget scale
  std::uint64_t seed = 99;
};

/// Admission-count envelopes from sampled steps, value slopes of Q by finite
/// differences, then the reward and Q Lipschitz bounds.
LipschitzConstants estimate_constants(const Market& market, const Policy& policy, const Net& critic,
                                      const FeatureScaling& fs, double gamma, const ConstantEstimation& est);

struct WeightedCandidates {
  std::vector<double> actions;
  std::vector<double> probs;
};

/// Clipped zone [center - xi, center + xi] intersected with [A_min, A_max];
/// returns false when it has no interior.
bool clipped_zone(double center, double xi, double A_min, double A_max, double& lo, double& hi);

/// M uniform candidates on the clipped zone weighted by
/// exp(-(a - c)^2 / (2 sigma^2) + Q(s, a) / lambda). A degenerate zone yields
/// the center with probability one.
WeightedCandidates ser_weights(const BidState& s, double center, const QRow& q, double sigma, double lambda,
                               double xi, int M, double A_min, double A_max, Rng& rng);

/// Gaussian factor alone, normalized over the given candidates.
std::vector<double> gaussian_weights(std::span<const double> actions, double center, double sigma);

/// In-window categorical draw from the SER weights; the safe action elsewhere.
double ser_action(const BidState& s, int t, double center, const QRow& q, const SafetyZone& zone,
                  const SerConfig& cfg, double A_min, double A_max, Rng& rng);

/// Truncated N(center, sigma^2) on the clipped zone inside the window.
double vanilla_action(const BidState& s, int t, double center, const SafetyZone& zone, double sigma, double A_min,
                      double A_max, Rng& rng);

Policy ser_policy(Policy safe, const Net& critic, const FeatureScaling& fs, SafetyZone zone, SerConfig cfg,
                  const MarketConfig& market);
Policy vanilla_policy(Policy safe, SafetyZone zone, double sigma, const MarketConfig& market);

}  // namespace sorl
