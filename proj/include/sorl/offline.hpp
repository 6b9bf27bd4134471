#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sorl/ddpg.hpp"

namespace sorl {

struct VcqlConfig {
  double alpha1 = 0.002;  ///< weight of the logsumexp push-down over sampled bids
  double alpha2 = 0.002;  ///< weight of the push-up at the behavior bid
  double beta = 0.001;    ///< weight of the softmax KL toward the reference critic
  double gamma = 0.99;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double tau = 0.01;
  int batch_size = 200;
  int action_samples = 32;
  int steps = 1000;
  int log_every = 50;
  NetShape shape;

  void validate() const;
};

/// One collection round: a tag naming its behavior policy and its records.
/// Every record stores the behavior policy's own query at its state.
struct DataRound {
  std::string tag;
  std::vector<TransitionRecord> records;
};

class TaggedDataset {
 public:
  /// Appends and seals a round; records are re-tagged with the round index.
  int add_round(std::string tag, std::vector<TransitionRecord> records);
  const std::vector<DataRound>& rounds() const noexcept { return rounds_; }
  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
  /// Cumulative union of all rounds, in round order.
  std::vector<TransitionRecord> all() const;

 private:
  std::vector<DataRound> rounds_;
};

struct VcqlTerms {
  double conservative = 0.0;  ///< mean_s logsumexp_k Q(s, a_k)
  double behavior = 0.0;      ///< mean_s Q(s, mu_b(s))
  double td = 0.0;            ///< 0.5 mean (Q(s,a) - y)^2
  double kl = 0.0;            ///< mean_s KL(softmax Q || softmax Q_ref)
  double total = 0.0;
  Eigen::VectorXd grad;
};

/// Full loss alpha1*conservative - alpha2*behavior + td + beta*kl and its
/// critic gradient. `sampled_actions` are shared by every state of the batch;
/// `reference` may be null only when beta is zero.
VcqlTerms vcql_loss(std::span<const TransitionRecord> batch, const Net& critic, const Eigen::VectorXd& targets,
                    const Net* reference, std::span<const double> sampled_actions, const VcqlConfig& config,
                    const FeatureScaling& fs);

/// The same loss with the KL term removed.
VcqlTerms cql_h_loss(std::span<const TransitionRecord> batch, const Net& critic, const Eigen::VectorXd& targets,
                     std::span<const double> sampled_actions, const VcqlConfig& config, const FeatureScaling& fs);

struct OfflineCurvePoint {
  int step = 0;
  double conservative = 0.0;
  double behavior = 0.0;
  double td = 0.0;
  double kl = 0.0;
  double total = 0.0;
  double actor = 0.0;
};

struct OfflineResult {
  Net actor;
  Net critic;
  std::vector<OfflineCurvePoint> curve;
};

struct OfflineInit {
  Net actor;
  Net critic;
};

/// Alternating critic and actor steps on the cumulative dataset. `reference`
/// is the frozen critic of the KL term (may be null when beta is zero).
OfflineResult train_offline(const TaggedDataset& data, const Net* reference, const VcqlConfig& config,
                            const FeatureScaling& fs, std::uint64_t seed, const OfflineInit* init = nullptr);

/// Mean KL(softmax Q || softmax Q_ref) over states on a bid sample.
double mean_action_kl(const Net& critic, const Net& reference, std::span<const BidState> states,
                      std::span<const double> actions, const FeatureScaling& fs);

void write_offline_curve(const std::string& path, std::span<const OfflineCurvePoint> curve);

}  // namespace sorl
