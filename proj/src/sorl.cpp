#include "sorl/sorl.hpp"

#include <cmath>
#include <fstream>

namespace sorl {

void SorlConfig::validate(int T) const {
  auto need = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("sorl.") + field + ": " + why);
  };
  need(max_iterations >= 0, "max_iterations", "must be >= 0");
  need(warm_episodes >= 0, "warm_episodes", "must be >= 0");
  need(episodes_per_round >= 1, "episodes_per_round", "must be >= 1");
  need(eval_episodes >= 1, "eval_episodes", "must be >= 1");
  need(convergence_tol >= 0.0, "convergence_tol", "must be >= 0");
  need(safety_fraction >= 0.0 && safety_fraction < 1.0, "safety_fraction", "must be in [0, 1)");
  zone.validate(T);
  ser.validate();
  boot.validate();
  iterate.validate();
}

std::vector<EpisodeTape> round_tapes(const Market& market, std::uint64_t seed, int round, int episodes) {
  return make_tapes(market, mix_seed(seed, 0x5000 + static_cast<std::uint64_t>(round)), episodes);
}

namespace {

struct Collected {
  std::vector<TransitionRecord> records;
  std::vector<double> values;
};

Collected collect(const Policy& behavior, std::span<const EpisodeTape> tapes, const MarketConfig& mc,
                  std::uint64_t seed) {
  Collected out;
  EpisodeOptions opts;
  opts.behavior_query = behavior;
  for (std::size_t i = 0; i < tapes.size(); ++i) {
    Rng rng(mix_seed(seed, i));
    auto traj = run_episode(tapes[i], mc, behavior, rng, opts);
    out.values.push_back(traj.metrics.buy_cnt);
    out.records.insert(out.records.end(), traj.records.begin(), traj.records.end());
  }
  return out;
}

double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

std::vector<double> buy_counts(const Policy& p, std::span<const EpisodeTape> tapes, const MarketConfig& mc,
                               std::uint64_t seed) {
  std::vector<double> out;
  for (const auto& m : rollout_metrics(p, tapes, mc, seed)) out.push_back(m.buy_cnt);
  return out;
}

void score_policy(SorlState& st, IterationMetrics& row, const MarketConfig& mc, const FeatureScaling& fs) {
  const auto pol = actor_policy(st.actors.back(), fs);
  row.v_policy = evaluate(pol, st.eval_tapes, mc).buy_cnt;
  row.v_policy_safe = evaluate(actor_policy(st.safe_actor, fs), st.eval_tapes, mc).buy_cnt;
  row.rr_star = ope_rr_star(pol, st.eval_vas, mc);
}

}  // namespace

TaggedDataset collect_boot_data(const Market& market, const Net& safe_actor, const FeatureScaling& fs,
                                const SorlConfig& cfg) {
  if (cfg.warm_episodes < 1) throw std::invalid_argument("warm_boot: empty dataset (warm_episodes = 0)");
  const auto tapes = round_tapes(market, cfg.seed, 0, cfg.warm_episodes);
  auto data = collect(actor_policy(safe_actor, fs), tapes, market.config(), mix_seed(cfg.seed, 0x100));
  TaggedDataset out;
  out.add_round("safe", std::move(data.records));
  return out;
}

std::vector<EpisodeTape> evaluation_tapes(const Market& market, const SorlConfig& cfg) {
  return make_tapes(market, mix_seed(cfg.seed, 0xE0A1), cfg.eval_episodes);
}

SorlState warm_boot(const Market& market, const Net& safe_actor, const Net& safe_critic, const FeatureScaling& fs,
                    const SorlConfig& cfg) {
  const auto& mc = market.config();
  cfg.validate(mc.T);
  if (cfg.warm_episodes < 1) throw std::invalid_argument("warm_boot: empty dataset (warm_episodes = 0)");
  SorlState st;
  st.safe_actor = safe_actor;
  st.safe_critic = safe_critic;
  const auto safe = actor_policy(safe_actor, fs);

  const auto tapes = round_tapes(market, cfg.seed, 0, cfg.warm_episodes);
  auto data = collect(safe, tapes, mc, mix_seed(cfg.seed, 0x100));
  st.data.add_round("safe", std::move(data.records));

  const OfflineInit init{safe_actor, safe_critic};
  auto trained = train_offline(st.data, &safe_critic, cfg.boot, fs, mix_seed(cfg.seed, 0x200),
                               cfg.warm_start ? &init : nullptr);
  st.actors.push_back(std::move(trained.actor));
  st.critics.push_back(std::move(trained.critic));

  st.eval_tapes = evaluation_tapes(market, cfg);
  st.eval_vas = build_vas_set(safe, st.eval_tapes, mc);

  IterationMetrics row;
  row.tau = 0;
  row.v_safe = row.v_explore = mean(data.values);
  row.episodes = cfg.warm_episodes;
  st.last_safe = st.last_explore = data.values;
  score_policy(st, row, mc, fs);
  st.metrics.push_back(row);
  return st;
}

void sorl_iterate(SorlState& st, const Market& market, const FeatureScaling& fs, const SorlConfig& cfg) {
  const auto& mc = market.config();
  const int tau = st.tau + 1;
  const Net& latest = st.critics.back();
  const auto safe = actor_policy(st.safe_actor, fs);
  const auto explore = ser_policy(safe, latest, fs, cfg.zone, cfg.ser, mc);

  const auto tapes = round_tapes(market, cfg.seed, tau, cfg.episodes_per_round);
  const std::uint64_t policy_seed = mix_seed(cfg.seed, 0x100 + static_cast<std::uint64_t>(tau));
  auto data = collect(explore, tapes, mc, policy_seed);

  IterationMetrics row;
  row.tau = tau;
  row.episodes = cfg.episodes_per_round;
  st.last_explore = data.values;
  st.last_safe = buy_counts(safe, tapes, mc, policy_seed);
  row.v_explore = mean(st.last_explore);
  row.v_safe = mean(st.last_safe);
  if (cfg.vanilla_arm) {
    st.last_vanilla = buy_counts(vanilla_policy(safe, cfg.zone, cfg.ser.sigma, mc), tapes, mc, policy_seed);
    row.v_vanilla = mean(st.last_vanilla);
  } else {
    st.last_vanilla.clear();
  }
  row.gate_passed = row.v_explore >= row.v_safe * (1.0 - cfg.safety_fraction);

  st.data.add_round("ser-" + std::to_string(tau), std::move(data.records));
  const OfflineInit init{st.actors.back(), st.critics.back()};
  auto trained = train_offline(st.data, &latest, cfg.iterate, fs, mix_seed(cfg.seed, 0x200 + static_cast<std::uint64_t>(tau)),
                               cfg.warm_start ? &init : nullptr);
  st.actors.push_back(std::move(trained.actor));
  st.critics.push_back(std::move(trained.critic));
  st.tau = tau;
  score_policy(st, row, mc, fs);
  st.metrics.push_back(row);
}

SorlState run_sorl(const Market& market, const Net& safe_actor, const Net& safe_critic, const FeatureScaling& fs,
                   const SorlConfig& cfg, const std::string& csv_path) {
  auto st = warm_boot(market, safe_actor, safe_critic, fs, cfg);
  int calm = 0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    sorl_iterate(st, market, fs, cfg);
    if (cfg.convergence_tol > 0.0) {
      const double prev = st.metrics[st.metrics.size() - 2].v_policy;
      const double cur = st.metrics.back().v_policy;
      const double rel = prev != 0.0 ? std::abs(cur - prev) / std::abs(prev) : std::abs(cur);
      calm = rel < cfg.convergence_tol ? calm + 1 : 0;
      if (calm >= 2) break;
    }
  }
  if (!csv_path.empty()) write_iteration_csv(csv_path, st.metrics);
  return st;
}

void write_iteration_csv(const std::string& path, const std::vector<IterationMetrics>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "tau,v_safe,v_explore,v_vanilla,v_policy,v_policy_safe,rr_star,safety_gate,episodes\n";
  for (const auto& r : rows) {
    out << r.tau << ',' << r.v_safe << ',' << r.v_explore << ',';
    if (r.v_vanilla) out << *r.v_vanilla;
    out << ',' << r.v_policy << ',' << r.v_policy_safe << ',' << r.rr_star << ',' << (r.gate_passed ? "pass" : "FAIL")
        << ',' << r.episodes << '\n';
  }
}

std::vector<SweepRow> variance_sweep(const TaggedDataset& data, const Net& reference, const VcqlConfig& vcql,
                                     const FeatureScaling& fs, std::span<const std::uint64_t> seeds,
                                     std::span<const EpisodeTape> eval_tapes, std::span<const VasDataset> eval_vas,
                                     const MarketConfig& mc, const OfflineInit* init) {
  if (seeds.empty()) throw ContractViolation("variance_sweep: no seeds");
  VcqlConfig plain = vcql;
  plain.beta = 0.0;
  std::vector<SweepRow> rows;
  const std::pair<const char*, const VcqlConfig*> arms[] = {{"vcql", &vcql}, {"cql-h", &plain}};
  for (const auto& [name, cfg] : arms) {
    for (std::uint64_t seed : seeds) {
      const auto trained = train_offline(data, &reference, *cfg, fs, seed, init);
      const auto pol = actor_policy(trained.actor, fs);
      SweepRow row;
      row.method = name;
      row.seed = seed;
      row.buy_cnt = evaluate(pol, eval_tapes, mc).buy_cnt;
      row.rr_star = eval_vas.empty() ? 0.0 : ope_rr_star(pol, eval_vas, mc);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_csv(const std::string& path, std::span<const SweepRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "method,seed,buy_cnt,rr_star\n";
  for (const auto& r : rows) out << r.method << ',' << r.seed << ',' << r.buy_cnt << ',' << r.rr_star << '\n';
}

}  // namespace sorl
