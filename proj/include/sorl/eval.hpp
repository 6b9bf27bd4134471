#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sorl/explore.hpp"
#include "sorl/market.hpp"
#include "sorl/vas.hpp"

namespace sorl {

struct MetricsReport {
  double buy_cnt = 0.0;  ///< mean won value per episode
  double con_bdg = 0.0;  ///< mean cost per episode
  std::optional<double> roi;  ///< buy_cnt / con_bdg
  std::optional<double> cpa;  ///< con_bdg / won_count
  double won_count = 0.0;     ///< mean won impressions per episode
  double discounted_value = 0.0;
  int episodes = 0;
  double buy_cnt_se = 0.0;
  double con_bdg_se = 0.0;
  double discounted_value_se = 0.0;
  double budget_used = 0.0;  ///< mean con_bdg / budget
};

MetricsReport summarize(std::span<const EpisodeMetrics> episodes);

/// Episode tapes for seeds mix_seed(base_seed, 0 .. count-1).
std::vector<EpisodeTape> make_tapes(const Market& market, std::uint64_t base_seed, int count);

/// Per-episode metrics of `policy` on each tape; stochastic policies draw from
/// a generator seeded by mix_seed(policy_seed, episode).
std::vector<EpisodeMetrics> rollout_metrics(const Policy& policy, std::span<const EpisodeTape> tapes,
                                            const MarketConfig& config, std::uint64_t policy_seed = 0);

MetricsReport evaluate(const Policy& policy, std::span<const EpisodeTape> tapes, const MarketConfig& config,
                       std::uint64_t policy_seed = 0);
MetricsReport evaluate(const Policy& policy, const Market& market, std::uint64_t base_seed, int episodes,
                       std::uint64_t policy_seed = 0);
MetricsReport evaluate_vas(const Policy& policy, std::span<const VasDataset> datasets, const MarketConfig& config,
                           std::uint64_t policy_seed = 0);

/// Fractional knapsack over (value, price) items ranked by value / price.
double knapsack_relaxation(std::span<const VasLogEntry> entries, double budget);
double knapsack_relaxation(const VasDataset& vas, double budget);

/// R / R* of a replay in the VAS, clamped to [0, 1]. Throws when R* is zero.
double ope_rr_star(const Policy& policy, const VasDataset& vas, double budget, const MarketConfig& config,
                   std::uint64_t policy_seed = 0);
/// Mean R / R* over several logged datasets, each with its own budget.
double ope_rr_star(const Policy& policy, std::span<const VasDataset> datasets, const MarketConfig& config,
                   std::uint64_t policy_seed = 0);

/// VAS datasets logged by `logger` on each tape.
std::vector<VasDataset> build_vas_set(const Policy& logger, std::span<const EpisodeTape> tapes,
                                      const MarketConfig& config, std::uint64_t policy_seed = 0);

struct MetricDelta {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  std::optional<double> delta_pct;  ///< 100 * (a - b) / b
  double se_pct = 0.0;              ///< paired standard error of the delta
};

/// Paired comparison on shared tapes.
std::vector<MetricDelta> ab_compare(const Policy& a, const Policy& b, std::span<const EpisodeTape> tapes,
                                    const MarketConfig& config, std::uint64_t policy_seed = 0);

/// Average ranks, 1 = largest.
std::vector<double> descending_ranks(std::span<const double> x);
/// Spearman correlation with tie-averaged ranks; empty when fewer than two
/// items or a constant column.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct NamedPolicy {
  std::string name;
  Policy policy;
};

struct IbooRow {
  std::string name;
  double vas_rr = 0.0;
  double sras_buy_cnt = 0.0;
  double vas_rank = 0.0;
  double sras_rank = 0.0;
};

struct IbooReport {
  std::vector<IbooRow> rows;
  std::optional<double> correlation;
  int inversions = 0;  ///< discordant pairs between the two rankings
};

IbooReport iboo_report(std::span<const NamedPolicy> policies, std::span<const VasDataset> vas,
                       std::span<const EpisodeTape> tapes, const MarketConfig& config);

struct VerifyGridPoint {
  double radius = 0.0;
  int t1 = 0;
  int window = 1;
};

struct VerifyConfig {
  std::vector<VerifyGridPoint> grid;
  int episodes = 100;
  std::uint64_t seed = 7;
  SerConfig ser;
  ConstantEstimation estimation;
};

struct VerifyRow {
  VerifyGridPoint point;
  double v_explore = 0.0;
  double v_safe = 0.0;
  double gap = 0.0;
  double bound = 0.0;
  bool passed = false;
};

struct BoundReport {
  LipschitzConstants constants;
  bool reward_slope_ok = false;  ///< observed |dr/da| <= L_r on the sampled states
  std::vector<VerifyRow> rows;
  bool all_passed = false;
};

/// For each grid point, runs SER exploration around `safe` against the same
/// tapes as `safe` and compares |V(pi_e) - V(mu_s)| (discounted values) with
/// radius * gamma^t1 * L_Q * window.
BoundReport verify_bounds(const Market& market, const Policy& safe, const Net& critic, const FeatureScaling& fs,
                              const VerifyConfig& cfg);

void write_metrics_csv(const std::string& path, std::span<const std::string> names,
                       std::span<const MetricsReport> reports);

}  // namespace sorl
