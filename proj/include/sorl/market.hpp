#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sorl {

using Rng = std::mt19937_64;

/// Raised when a caller breaks an operation's precondition (bad action, bad shapes).
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised by config validation. `what()` carries the offending field path.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Deterministic 64-bit seed mixing (splitmix64 finalizer over the pair).
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// One auction item as seen by the learning advertiser.
struct ImpressionOpportunity {
  double v1 = 0.0;  ///< stage-1 rough value
  double v2 = 0.0;  ///< stage-2 accurate value
  double v = 0.0;   ///< realized value on a win
  double p1 = 0.0;  ///< stage-1 admission threshold (eCPM units)
  double p2 = 0.0;  ///< stage-2 market price (eCPM units)
  double p = 0.0;   ///< charged price on a win

  bool operator==(const ImpressionOpportunity&) const = default;
};

/// CMDP state: (budget left, time left, budget consumed).
struct BidState {
  double budget_left = 0.0;
  int time_left = 0;
  double budget_consumed = 0.0;

  double total_budget() const noexcept { return budget_left + budget_consumed; }
  bool operator==(const BidState&) const = default;
};

struct MarketConfig {
  int T = 96;
  int n_min = 100;
  int n_max = 500;
  double B_min = 31000.0;
  double B_max = 36000.0;
  double v_M = 1.0;
  double p_M = 1000.0;
  double A_min = 1.0;
  double A_max = 1000.0;
  int n_competitors = 99;

  // Competitor market model. Each competitor holds a fixed bid scalar drawn
  // once from [competitor_bid_min, competitor_bid_max]; stage 1 admits the
  // top `stage2_slots` competitor eCPMs.
  double competitor_bid_min = 1.0;
  double competitor_bid_max = 3.0;
  int stage2_slots = 10;
  double value_noise = 0.3;  ///< lognormal sd between rough and accurate values
  double v_min = 0.01;       ///< value floor
  double p_min = 0.01;       ///< price floor; also the termination threshold

  double gamma = 0.99;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StepOutcome {
  double reward = 0.0;
  double cost = 0.0;
  int won_count = 0;
  BidState next_state;
  bool terminated = false;
};

/// Per-impression stage results, recorded when building replay logs.
struct StageResult {
  bool passed_stage1 = false;
  bool passed_stage2 = false;
  bool won = false;
};

/// All randomness of one episode that does not depend on the bidder.
struct EpisodeTape {
  double budget = 0.0;
  std::vector<std::vector<ImpressionOpportunity>> steps;
};

/// The simulated two-stage cascade auction market with a fixed competitor
/// population. Instances are immutable after construction.
class Market {
 public:
  explicit Market(MarketConfig config);

  const MarketConfig& config() const noexcept { return config_; }
  std::span<const double> competitor_bids() const noexcept { return competitor_bids_; }

  /// Impressions arriving between step t and t+1 (1 <= t <= T).
  std::vector<ImpressionOpportunity> generate_impressions(int t, Rng& rng) const;
  double draw_budget(Rng& rng) const;
  EpisodeTape draw_episode(std::uint64_t episode_seed) const;

 private:
  MarketConfig config_;
  std::vector<double> competitor_bids_;
};

/// Resolves one step of the cascade auction. Impressions are processed in
/// list order; an otherwise-won impression is skipped when its price exceeds
/// the remaining budget. When `stages` is non-null it receives one entry per
/// impression.
StepOutcome auction_step(const BidState& state, double action,
                         std::span<const ImpressionOpportunity> imps, const MarketConfig& config,
                         std::vector<StageResult>* stages = nullptr);

/// Deterministic or stochastic bidding policy. Stochastic policies draw from
/// the supplied generator only.
using Policy = std::function<double(const BidState&, Rng&)>;

/// Step index t in [0, T-1] for a state.
inline int step_index(const BidState& s, const MarketConfig& config) noexcept {
  return config.T - s.time_left;
}

struct TransitionRecord {
  int t = 0;
  BidState s;
  double a = 0.0;
  double r = 0.0;
  double cost = 0.0;
  BidState s_next;
  bool done = false;
  int round = 0;                 ///< collection round tag
  double behavior_action = 0.0;  ///< an independent query of the behavior policy at s

  bool operator==(const TransitionRecord&) const = default;
};

struct EpisodeMetrics {
  double budget = 0.0;
  double buy_cnt = 0.0;  ///< total won value
  double con_bdg = 0.0;  ///< total cost
  int won_count = 0;
  double discounted_value = 0.0;
  int steps = 0;
};

struct Trajectory {
  std::vector<TransitionRecord> records;
  EpisodeMetrics metrics;
  /// Filled only when stage recording was requested.
  std::vector<std::vector<StageResult>> stages;
};

struct EpisodeOptions {
  bool record_stages = false;
  /// Optional behavior query stored in each record; defaults to the taken action.
  Policy behavior_query;
};

Trajectory run_episode(const EpisodeTape& tape, const MarketConfig& config, const Policy& policy,
                       Rng& policy_rng, const EpisodeOptions& options = {});
Trajectory run_episode(const Market& market, const Policy& policy, std::uint64_t episode_seed,
                       Rng& policy_rng, const EpisodeOptions& options = {});

Policy constant_policy(double bid);

// Line-delimited record format: a `#sorl-records kind=...` header line, a
// column header, then one comma-separated row per record. Doubles are written
// with round-trip precision.
void write_trajectory(std::ostream& out, std::span<const TransitionRecord> records);
std::vector<TransitionRecord> read_trajectory(std::istream& in);

}  // namespace sorl
