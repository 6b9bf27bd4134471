#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sorl/approx.hpp"
#include "sorl/nets.hpp"

namespace sorl {

struct DdpgConfig {
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double tau = 0.01;  ///< soft-update rate
  int buffer_capacity = 1000;
  int batch_size = 200;
  double gamma = 0.99;
  double exploration_variance = 0.01;  ///< Gaussian noise variance, bid units squared
  int episodes = 200;                  ///< training episode budget
  int updates_per_step = 1;
  NetShape shape;
  std::uint64_t seed = 1;
  /// Episodes after which a copy of the critic is kept (early critics serve
  /// as deliberately poor value estimates).
  std::vector<int> snapshot_episodes;
  int eval_episodes = 20;
  /// Every `select_every` episodes the actor is scored on `select_episodes`
  /// validation tapes and the best-scoring nets are returned; 0 keeps the last.
  int select_every = 0;
  int select_episodes = 10;
  std::vector<double> gate_bids;  ///< constant bids the trained policy is gated against

  void validate() const;
};

/// FIFO transition store with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(const TransitionRecord& rec);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const TransitionRecord& operator[](std::size_t i) const { return items_[i]; }
  std::vector<TransitionRecord> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<TransitionRecord> items_;
};

struct LossGrad {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

/// y = r * reward_scale + gamma * (1 - done) * Q_target(s', actor_target(s')).
Eigen::VectorXd td_targets(std::span<const TransitionRecord> batch, const Net& critic_target,
                           const Net& actor_target, const FeatureScaling& fs, double gamma);

/// 0.5 * mean (Q(s,a) - y)^2 with its parameter gradient.
LossGrad td_loss(const Net& critic, std::span<const TransitionRecord> batch, const Eigen::VectorXd& targets,
                 const FeatureScaling& fs);

/// -mean Q(s, actor(s)); gradient with respect to the actor parameters only.
LossGrad actor_loss(const Net& actor, const Net& critic, std::span<const TransitionRecord> batch,
                    const FeatureScaling& fs);

struct ActorCritic {
  Net actor;
  Net critic;
  Net actor_target;
  Net critic_target;
  AdamState actor_opt;
  AdamState critic_opt;

  static ActorCritic create(const NetShape& shape, double actor_lr, double critic_lr, Rng& rng);
  /// Wraps existing networks; targets start as copies.
  static ActorCritic from(Net actor, Net critic, double actor_lr, double critic_lr);
};

struct UpdateLosses {
  double critic = 0.0;
  double actor = 0.0;
};

/// One critic step, one actor step, then soft target updates.
UpdateLosses ddpg_update(std::span<const TransitionRecord> batch, ActorCritic& nets, const DdpgConfig& config,
                         const FeatureScaling& fs);

struct TrainingCurvePoint {
  int episode = 0;
  double buy_cnt = 0.0;
  double con_bdg = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

struct SafePolicyResult {
  Net actor;
  Net critic;
  FeatureScaling scaling;
  std::vector<TrainingCurvePoint> curve;
  std::vector<std::pair<int, Net>> critic_snapshots;
  int selected_episode = 0;  ///< training episodes behind the returned nets
  double selected_buy_cnt = 0.0;  ///< validation score of the returned nets
  double eval_buy_cnt = 0.0;
  double best_gate_buy_cnt = 0.0;
  double best_gate_bid = 0.0;
  bool gate_passed = false;
};

SafePolicyResult train_safe_policy(const Market& market, const DdpgConfig& config, const FeatureScaling& fs);

void write_training_curve(const std::string& path, std::span<const TrainingCurvePoint> curve);

}  // namespace sorl
