#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sorl/ddpg.hpp"
#include "sorl/eval.hpp"
#include "sorl/explore.hpp"
#include "sorl/market.hpp"
#include "sorl/offline.hpp"
#include "sorl/sorl.hpp"

namespace sorl {

struct ExperimentConfig {
  MarketConfig market;
  DdpgConfig ddpg;
  SorlConfig sorl;
  double reward_scale = 0.01;
  double action_center = 0.0;  ///< 0 centers bid features on the action range
  double action_span = 0.0;    ///< 0 spans the action range
  int verify_episodes = 100;
  std::vector<double> verify_radii{0.1, 0.5, 1.0};
  std::vector<int> verify_t1{0, 32, 64};
  std::vector<int> verify_windows{8, 32};
  int sweep_seeds = 20;
  int sweep_eval_episodes = 20;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs/default";

  /// Throws ConfigError naming the offending field path.
  void validate() const;
  FeatureScaling scaling() const;
  VerifyConfig verify_config() const;
  /// Loop settings with the offline nets shaped like the safe policy's.
  SorlConfig sorl_config() const;
};

/// Full-size market and training budgets.
ExperimentConfig full_preset();
/// Reduced market and training budgets sized for a single core.
ExperimentConfig desk_preset();

/// Flat `section.key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values raise ConfigError with the key and line number.
ExperimentConfig load_config(std::istream& in, ExperimentConfig base = desk_preset());
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = desk_preset());
void save_config(std::ostream& out, const ExperimentConfig& cfg);
/// Applies a single `key=value` override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

}  // namespace sorl
