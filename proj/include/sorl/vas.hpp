#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "sorl/market.hpp"

namespace sorl {

/// An impression the logging bidder carried into stage 2, with frozen prices.
struct VasLogEntry {
  int t = 0;
  double v2 = 0.0;
  double p2 = 0.0;
  double v = 0.0;
  double p = 0.0;

  bool operator==(const VasLogEntry&) const = default;
};

/// Replay environment built from one logged episode. Immutable once built.
struct VasDataset {
  double budget = 0.0;
  int T = 0;
  std::vector<std::vector<VasLogEntry>> steps;  ///< one list per step, T lists

  std::size_t entry_count() const noexcept;
  bool operator==(const VasDataset&) const = default;
};

/// Keeps the stage-1 survivors of a logged episode. `log` must carry stage
/// results (run with EpisodeOptions::record_stages).
VasDataset build_vas(const EpisodeTape& tape, const Trajectory& log, const MarketConfig& config);

/// Single-stage replay: win iff a * v2 >= p2 and the budget covers p.
StepOutcome vas_step(const BidState& state, double action, std::span<const VasLogEntry> entries,
                     const MarketConfig& config);

Trajectory run_vas_episode(const VasDataset& vas, const MarketConfig& config, const Policy& policy, Rng& rng);

void write_vas(std::ostream& out, const VasDataset& vas);
VasDataset read_vas(std::istream& in);

}  // namespace sorl
