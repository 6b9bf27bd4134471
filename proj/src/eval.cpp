#include "sorl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace sorl {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  MeanSe out;
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  out.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

}  // namespace

MetricsReport summarize(std::span<const EpisodeMetrics> episodes) {
  MetricsReport r;
  r.episodes = static_cast<int>(episodes.size());
  if (episodes.empty()) return r;
  std::vector<double> buy, cost, disc;
  double won = 0.0, used = 0.0;
  for (const auto& e : episodes) {
    buy.push_back(e.buy_cnt);
    cost.push_back(e.con_bdg);
    disc.push_back(e.discounted_value);
    won += e.won_count;
    used += e.budget > 0.0 ? e.con_bdg / e.budget : 0.0;
  }
  const auto b = mean_se(buy), c = mean_se(cost), d = mean_se(disc);
  r.buy_cnt = b.mean;
  r.buy_cnt_se = b.se;
  r.con_bdg = c.mean;
  r.con_bdg_se = c.se;
  r.discounted_value = d.mean;
  r.discounted_value_se = d.se;
  r.won_count = won / r.episodes;
  r.budget_used = used / r.episodes;
  if (r.con_bdg > 0.0) r.roi = r.buy_cnt / r.con_bdg;
  if (r.won_count > 0.0) r.cpa = r.con_bdg / r.won_count;
  return r;
}

std::vector<EpisodeTape> make_tapes(const Market& market, std::uint64_t base_seed, int count) {
  std::vector<EpisodeTape> tapes;
  tapes.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) tapes.push_back(market.draw_episode(mix_seed(base_seed, static_cast<std::uint64_t>(i))));
  return tapes;
}

std::vector<EpisodeMetrics> rollout_metrics(const Policy& policy, std::span<const EpisodeTape> tapes,
                                            const MarketConfig& config, std::uint64_t policy_seed) {
  std::vector<EpisodeMetrics> out;
  out.reserve(tapes.size());
  for (std::size_t i = 0; i < tapes.size(); ++i) {
    Rng rng(mix_seed(policy_seed, i));
    out.push_back(run_episode(tapes[i], config, policy, rng).metrics);
  }
  return out;
}

MetricsReport evaluate(const Policy& policy, std::span<const EpisodeTape> tapes, const MarketConfig& config,
                       std::uint64_t policy_seed) {
  if (tapes.empty()) throw ContractViolation("evaluate: need at least one episode");
  const auto m = rollout_metrics(policy, tapes, config, policy_seed);
  return summarize(m);
}

MetricsReport evaluate(const Policy& policy, const Market& market, std::uint64_t base_seed, int episodes,
                       std::uint64_t policy_seed) {
  if (episodes < 1) throw ContractViolation("evaluate: need at least one episode");
  std::vector<EpisodeMetrics> m;
  for (int i = 0; i < episodes; ++i) {
    Rng rng(mix_seed(policy_seed, static_cast<std::uint64_t>(i)));
    m.push_back(run_episode(market, policy, mix_seed(base_seed, static_cast<std::uint64_t>(i)), rng).metrics);
  }
  return summarize(m);
}

MetricsReport evaluate_vas(const Policy& policy, std::span<const VasDataset> datasets, const MarketConfig& config,
                           std::uint64_t policy_seed) {
  if (datasets.empty()) throw ContractViolation("evaluate_vas: need at least one dataset");
  std::vector<EpisodeMetrics> m;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    Rng rng(mix_seed(policy_seed, i));
    m.push_back(run_vas_episode(datasets[i], config, policy, rng).metrics);
  }
  return summarize(m);
}

double knapsack_relaxation(std::span<const VasLogEntry> entries, double budget) {
  std::vector<const VasLogEntry*> order;
  order.reserve(entries.size());
  for (const auto& e : entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const VasLogEntry* a, const VasLogEntry* b) { return a->v * b->p > b->v * a->p; });
  double left = budget, total = 0.0;
  for (const auto* e : order) {
    if (left <= 0.0) break;
    if (e->p <= left) {
      total += e->v;
      left -= e->p;
    } else {
      total += e->v * (left / e->p);
      left = 0.0;
    }
  }
  return total;
}

double knapsack_relaxation(const VasDataset& vas, double budget) {
  std::vector<VasLogEntry> all;
  all.reserve(vas.entry_count());
  for (const auto& s : vas.steps) all.insert(all.end(), s.begin(), s.end());
  return knapsack_relaxation(all, budget);
}

double ope_rr_star(const Policy& policy, const VasDataset& vas, double budget, const MarketConfig& config,
                   std::uint64_t policy_seed) {
  if (vas.entry_count() == 0) throw ContractViolation("ope_rr_star: empty VAS");
  const double best = knapsack_relaxation(vas, budget);
  if (!(best > 0.0)) throw std::domain_error("ope_rr_star: R* is zero, ratio undefined");
  VasDataset replay = vas;
  replay.budget = budget;
  Rng rng(policy_seed);
  const double r = run_vas_episode(replay, config, policy, rng).metrics.buy_cnt;
  return std::clamp(r / best, 0.0, 1.0);
}

double ope_rr_star(const Policy& policy, std::span<const VasDataset> datasets, const MarketConfig& config,
                   std::uint64_t policy_seed) {
  if (datasets.empty()) throw ContractViolation("ope_rr_star: no datasets");
  double total = 0.0;
  for (std::size_t i = 0; i < datasets.size(); ++i)
    total += ope_rr_star(policy, datasets[i], datasets[i].budget, config, mix_seed(policy_seed, i));
  return total / static_cast<double>(datasets.size());
}

std::vector<VasDataset> build_vas_set(const Policy& logger, std::span<const EpisodeTape> tapes,
                                      const MarketConfig& config, std::uint64_t policy_seed) {
  std::vector<VasDataset> out;
  EpisodeOptions opts;
  opts.record_stages = true;
  for (std::size_t i = 0; i < tapes.size(); ++i) {
    Rng rng(mix_seed(policy_seed, i));
    const auto log = run_episode(tapes[i], config, logger, rng, opts);
    out.push_back(build_vas(tapes[i], log, config));
  }
  return out;
}

std::vector<MetricDelta> ab_compare(const Policy& a, const Policy& b, std::span<const EpisodeTape> tapes,
                                    const MarketConfig& config, std::uint64_t policy_seed) {
  if (tapes.empty()) throw ContractViolation("ab_compare: need at least one episode");
  const auto ma = rollout_metrics(a, tapes, config, policy_seed);
  const auto mb = rollout_metrics(b, tapes, config, policy_seed);
  const auto ra = summarize(ma), rb = summarize(mb);

  auto paired = [&](const char* name, double mean_a, double mean_b, auto field) {
    MetricDelta d;
    d.metric = name;
    d.a = mean_a;
    d.b = mean_b;
    if (mean_b != 0.0) {
      d.delta_pct = 100.0 * (mean_a - mean_b) / mean_b;
      std::vector<double> diff;
      for (std::size_t i = 0; i < ma.size(); ++i) diff.push_back(field(ma[i]) - field(mb[i]));
      d.se_pct = 100.0 * mean_se(diff).se / std::abs(mean_b);
    }
    return d;
  };
  auto ratio = [](const char* name, std::optional<double> x, std::optional<double> y) {
    MetricDelta d;
    d.metric = name;
    d.a = x.value_or(std::nan(""));
    d.b = y.value_or(std::nan(""));
    if (x && y && *y != 0.0) d.delta_pct = 100.0 * (*x - *y) / *y;
    return d;
  };
  return {
      paired("BuyCnt", ra.buy_cnt, rb.buy_cnt, [](const EpisodeMetrics& m) { return m.buy_cnt; }),
      paired("ConBdg", ra.con_bdg, rb.con_bdg, [](const EpisodeMetrics& m) { return m.con_bdg; }),
      ratio("ROI", ra.roi, rb.roi),
      ratio("CPA", ra.cpa, rb.cpa),
  };
}

std::vector<double> descending_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ContractViolation("spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = descending_ranks(x), ry = descending_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

IbooReport iboo_report(std::span<const NamedPolicy> policies, std::span<const VasDataset> vas,
                       std::span<const EpisodeTape> tapes, const MarketConfig& config) {
  IbooReport rep;
  std::vector<double> rr, buy;
  for (const auto& p : policies) {
    IbooRow row;
    row.name = p.name;
    row.vas_rr = ope_rr_star(p.policy, vas, config);
    row.sras_buy_cnt = evaluate(p.policy, tapes, config).buy_cnt;
    rr.push_back(row.vas_rr);
    buy.push_back(row.sras_buy_cnt);
    rep.rows.push_back(row);
  }
  const auto r1 = descending_ranks(rr), r2 = descending_ranks(buy);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    rep.rows[i].vas_rank = r1[i];
    rep.rows[i].sras_rank = r2[i];
    for (std::size_t j = i + 1; j < rep.rows.size(); ++j)
      if ((r1[i] - r1[j]) * (r2[i] - r2[j]) < 0.0) ++rep.inversions;
  }
  rep.correlation = spearman(rr, buy);
  return rep;
}

BoundReport verify_bounds(const Market& market, const Policy& safe, const Net& critic, const FeatureScaling& fs,
                              const VerifyConfig& cfg) {
  const auto& mc = market.config();
  BoundReport rep;
  rep.constants = estimate_constants(market, safe, critic, fs, mc.gamma, cfg.estimation);
  rep.reward_slope_ok = rep.constants.max_reward_slope <= rep.constants.L_r;
  const auto tapes = make_tapes(market, cfg.seed, cfg.episodes);
  const auto base = summarize(rollout_metrics(safe, tapes, mc, mix_seed(cfg.seed, 1)));
  rep.all_passed = rep.reward_slope_ok;
  for (const auto& g : cfg.grid) {
    VerifyRow row;
    row.point = g;
    SafetyZone zone{g.radius, g.t1, std::min(mc.T - 1, g.t1 + g.window - 1)};
    const auto pol = ser_policy(safe, critic, fs, zone, cfg.ser, mc);
    const auto m = summarize(rollout_metrics(pol, tapes, mc, mix_seed(cfg.seed, 2)));
    row.v_safe = base.discounted_value;
    row.v_explore = m.discounted_value;
    row.gap = std::abs(row.v_explore - row.v_safe);
    row.bound = g.radius * std::pow(mc.gamma, g.t1) * rep.constants.L_Q * zone.window();
    row.passed = row.gap <= row.bound;
    rep.all_passed = rep.all_passed && row.passed;
    rep.rows.push_back(row);
  }
  return rep;
}

void write_metrics_csv(const std::string& path, std::span<const std::string> names,
                       std::span<const MetricsReport> reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "policy,episodes,buy_cnt,buy_cnt_se,con_bdg,con_bdg_se,roi,cpa,won_count,discounted_value,budget_used\n";
  auto opt = [](const std::optional<double>& x) { return x ? std::to_string(*x) : std::string(); };
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << names[i] << ',' << r.episodes << ',' << r.buy_cnt << ',' << r.buy_cnt_se << ',' << r.con_bdg << ','
        << r.con_bdg_se << ',' << opt(r.roi) << ',' << opt(r.cpa) << ',' << r.won_count << ','
        << r.discounted_value << ',' << r.budget_used << '\n';
  }
}

}  // namespace sorl
