#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sorl/eval.hpp"
#include "sorl/explore.hpp"
#include "sorl/offline.hpp"

namespace sorl {

struct SorlConfig {
  int max_iterations = 5;
  int warm_episodes = 20;        ///< safe-policy episodes in the boot dataset
  int episodes_per_round = 20;   ///< exploration episodes per iteration
  int eval_episodes = 20;        ///< episodes for evaluating each trained policy
  double convergence_tol = 0.0;  ///< relative change of V(mu_tau); 0 disables the test
  double safety_fraction = 0.05;  ///< eps_s as a fraction of V(mu_s)
  bool vanilla_arm = true;        ///< also roll out truncated-Gaussian exploration on the same tapes
  bool warm_start = true;         ///< start each iteration from the previous networks
  SafetyZone zone;
  SerConfig ser;
  VcqlConfig boot;   ///< offline training of (mu_0, Q_0)
  VcqlConfig iterate;  ///< offline training inside the loop
  std::uint64_t seed = 1;

  void validate(int T) const;
};

struct IterationMetrics {
  int tau = 0;
  double v_safe = 0.0;             ///< mu_s on this round's tapes
  double v_explore = 0.0;          ///< SER exploration on this round's tapes
  std::optional<double> v_vanilla;  ///< truncated-Gaussian exploration, same tapes
  double v_policy = 0.0;           ///< mu_tau on the evaluation tapes
  double v_policy_safe = 0.0;      ///< mu_s on the evaluation tapes
  double rr_star = 0.0;            ///< mean R / R* of mu_tau in VAS built from mu_s logs
  bool gate_passed = true;         ///< v_explore >= v_safe - eps_s
  int episodes = 0;
};

struct SorlState {
  int tau = 0;
  Net safe_actor;
  Net safe_critic;
  std::vector<Net> actors;   ///< mu_0 .. mu_tau
  std::vector<Net> critics;  ///< Q_0 .. Q_tau
  TaggedDataset data;
  std::vector<IterationMetrics> metrics;  ///< one row per trained policy, row 0 is the boot
  /// Per-episode exploration values of the latest round (SER, then vanilla).
  std::vector<double> last_explore;
  std::vector<double> last_vanilla;
  std::vector<double> last_safe;
  std::vector<EpisodeTape> eval_tapes;
  std::vector<VasDataset> eval_vas;  ///< mu_s logs on the evaluation tapes
};

/// Tapes for collection round `round` of a run seeded `seed`.
std::vector<EpisodeTape> round_tapes(const Market& market, std::uint64_t seed, int round, int episodes);

/// Safe-policy episodes of round 0, tagged "safe".
TaggedDataset collect_boot_data(const Market& market, const Net& safe_actor, const FeatureScaling& fs,
                                const SorlConfig& cfg);

/// Evaluation tapes of a run seeded `cfg.seed`.
std::vector<EpisodeTape> evaluation_tapes(const Market& market, const SorlConfig& cfg);

SorlState warm_boot(const Market& market, const Net& safe_actor, const Net& safe_critic, const FeatureScaling& fs,
                    const SorlConfig& cfg);

void sorl_iterate(SorlState& state, const Market& market, const FeatureScaling& fs, const SorlConfig& cfg);

SorlState run_sorl(const Market& market, const Net& safe_actor, const Net& safe_critic, const FeatureScaling& fs,
                   const SorlConfig& cfg, const std::string& csv_path = "");

struct SweepRow {
  std::string method;  ///< "vcql" or "cql-h"
  std::uint64_t seed = 0;
  double buy_cnt = 0.0;
  double rr_star = 0.0;
};

/// Trains V-CQL and CQL(H) on one fixed dataset once per seed, starting from
/// `init` (fresh nets when null), and scores each actor on shared evaluation
/// tapes and VAS.
std::vector<SweepRow> variance_sweep(const TaggedDataset& data, const Net& reference, const VcqlConfig& vcql,
                                     const FeatureScaling& fs, std::span<const std::uint64_t> seeds,
                                     std::span<const EpisodeTape> eval_tapes, std::span<const VasDataset> eval_vas,
                                     const MarketConfig& mc, const OfflineInit* init = nullptr);

void write_sweep_csv(const std::string& path, std::span<const SweepRow> rows);

void write_iteration_csv(const std::string& path, const std::vector<IterationMetrics>& rows);

}  // namespace sorl
