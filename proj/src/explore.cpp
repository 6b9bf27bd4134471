#include "sorl/explore.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace sorl {

void SafetyZone::validate(int T) const {
  if (!(radius >= 0.0)) throw ConfigError("zone.radius: must be >= 0");
  if (t1 < 0 || t1 > t2 || t2 > T - 1) throw ConfigError("zone.t1/t2: need 0 <= t1 <= t2 <= T-1");
}

void SerConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("ser.sigma: must be > 0");
  if (!(lambda > 0.0)) throw ConfigError("ser.lambda: must be > 0");
  if (candidates < 1) throw ConfigError("ser.candidates: must be >= 1");
}

QRow critic_row(const Net& critic, const FeatureScaling& fs) {
  auto net = std::make_shared<const Net>(critic);
  return [net, fs](const BidState& s, std::span<const double> actions) { return q_row(*net, s, actions, fs); };
}

double safety_radius(double eps_s, double L_Q, double gamma, int t1, int window) {
  if (!(eps_s > 0.0) || !(L_Q > 0.0) || !(gamma > 0.0 && gamma <= 1.0) || t1 < 0 || window < 1)
    throw ContractViolation("safety_radius: inputs must be positive with gamma in (0, 1]");
  return eps_s / (L_Q * std::pow(gamma, t1) * window);
}

LipschitzConstants with_bounds(LipschitzConstants k, double v_M, double p_M, double gamma) {
  k.L_r = (k.k1 + k.k2) * v_M;
  k.L_Q = (v_M + gamma * (k.k3 + k.k4) * p_M) * (k.k1 + k.k2);
  return k;
}

LipschitzConstants estimate_constants(const Market& market, const Policy& policy, const Net& critic,
                                      const FeatureScaling& fs, double gamma, const ConstantEstimation& est) {
  if (est.episodes < 1 || est.states_per_episode < 1 || est.bid_grid < 2)
    throw ContractViolation("estimate_constants: insufficient samples requested");
  const auto& mc = market.config();
  std::vector<double> grid(static_cast<std::size_t>(est.bid_grid));
  for (int i = 0; i < est.bid_grid; ++i)
    grid[static_cast<std::size_t>(i)] = mc.A_min + (mc.A_max - mc.A_min) * i / (est.bid_grid - 1);

  LipschitzConstants k;
  Rng rng(mix_seed(est.seed, 1));
  std::vector<BidState> states;
  for (int e = 0; e < est.episodes; ++e) {
    const auto tape = market.draw_episode(mix_seed(est.seed, 100 + static_cast<std::uint64_t>(e)));
    const auto traj = run_episode(tape, mc, policy, rng);
    const int len = static_cast<int>(traj.records.size());
    for (int i = 0; i < est.states_per_episode && len > 0; ++i) {
      const int idx = std::min(len - 1, i * len / est.states_per_episode);
      const auto& rec = traj.records[static_cast<std::size_t>(idx)];
      states.push_back(rec.s);
      const auto& imps = tape.steps[static_cast<std::size_t>(rec.t)];

      // admission counts and rewards over the bid grid
      double prev_n1 = 0, prev_n2 = 0, prev_r = 0;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const double a = grid[g];
        int n1 = 0, n2 = 0;
        for (const auto& imp : imps) {
          n1 += a * imp.v1 >= imp.p1;
          n2 += a * imp.v2 >= imp.p2;
        }
        const double r = auction_step(rec.s, a, imps, mc).reward;
        k.k1 = std::max(k.k1, n1 / a);
        k.k2 = std::max(k.k2, n2 / a);
        if (g > 0) {
          const double da = a - grid[g - 1];
          k.k1 = std::max(k.k1, (n1 - prev_n1) / da);
          k.k2 = std::max(k.k2, (n2 - prev_n2) / da);
          k.max_reward_slope = std::max(k.max_reward_slope, std::abs(r - prev_r) / da);
        }
        prev_n1 = n1;
        prev_n2 = n2;
        prev_r = r;
      }
    }
  }
  if (states.empty()) throw ContractViolation("estimate_constants: no states sampled");
  k.states = static_cast<int>(states.size());

  // Q slopes along budget_left and budget_consumed, converted to value units.
  const double h = est.budget_step > 0.0 ? est.budget_step : 1e-3 * fs.budget_scale;
  const std::size_t stride = std::max<std::size_t>(1, grid.size() / 20);
  for (const auto& s : states) {
    std::vector<double> bids;
    for (std::size_t g = 0; g < grid.size(); g += stride) bids.push_back(grid[g]);
    BidState up = s, down = s;
    up.budget_left += h;
    down.budget_left = std::max(0.0, s.budget_left - h);
    const double span1 = up.budget_left - down.budget_left;
    const Eigen::VectorXd d1 = (q_row(critic, up, bids, fs) - q_row(critic, down, bids, fs)) / span1;
    up = s;
    down = s;
    up.budget_consumed += h;
    down.budget_consumed = std::max(0.0, s.budget_consumed - h);
    const double span3 = up.budget_consumed - down.budget_consumed;
    const Eigen::VectorXd d3 = (q_row(critic, up, bids, fs) - q_row(critic, down, bids, fs)) / span3;
    k.k3 = std::max(k.k3, d1.cwiseAbs().maxCoeff() / fs.reward_scale);
    k.k4 = std::max(k.k4, d3.cwiseAbs().maxCoeff() / fs.reward_scale);
  }
  return with_bounds(k, mc.v_M, mc.p_M, gamma);
}

bool clipped_zone(double center, double xi, double A_min, double A_max, double& lo, double& hi) {
  lo = std::max(center - xi, A_min);
  hi = std::min(center + xi, A_max);
  return hi > lo;
}

namespace {

void normalize_log_weights(std::vector<double>& w) {
  const double top = *std::max_element(w.begin(), w.end());
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - top);
    total += x;
  }
  for (double& x : w) x /= total;
}

double categorical(const std::vector<double>& probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<double>(i);
  }
  return static_cast<double>(probs.size() - 1);
}

}  // namespace

WeightedCandidates ser_weights(const BidState& s, double center, const QRow& q, double sigma, double lambda,
                               double xi, int M, double A_min, double A_max, Rng& rng) {
  if (M < 1) throw ContractViolation("ser_weights: need at least one candidate");
  if (!(sigma > 0.0) || !(lambda > 0.0)) throw ContractViolation("ser_weights: sigma and lambda must be positive");
  WeightedCandidates out;
  double lo = 0.0, hi = 0.0;
  if (!(xi > 0.0) || !clipped_zone(center, xi, A_min, A_max, lo, hi)) {
    out.actions = {std::clamp(center, A_min, A_max)};
    out.probs = {1.0};
    return out;
  }
  std::uniform_real_distribution<double> u(lo, hi);
  out.actions.resize(static_cast<std::size_t>(M));
  for (double& a : out.actions) a = u(rng);
  const Eigen::VectorXd qv = q(s, out.actions);
  out.probs.resize(out.actions.size());
  for (std::size_t m = 0; m < out.actions.size(); ++m) {
    const double d = out.actions[m] - center;
    out.probs[m] = -d * d / (2.0 * sigma * sigma) + qv(static_cast<Eigen::Index>(m)) / lambda;
  }
  normalize_log_weights(out.probs);
  return out;
}

std::vector<double> gaussian_weights(std::span<const double> actions, double center, double sigma) {
  std::vector<double> w(actions.begin(), actions.end());
  for (double& a : w) a = -(a - center) * (a - center) / (2.0 * sigma * sigma);
  normalize_log_weights(w);
  return w;
}

double ser_action(const BidState& s, int t, double center, const QRow& q, const SafetyZone& zone,
                  const SerConfig& cfg, double A_min, double A_max, Rng& rng) {
  if (!zone.active(t)) return center;
  const auto wc = ser_weights(s, center, q, cfg.sigma, cfg.lambda, zone.radius, cfg.candidates, A_min, A_max, rng);
  return wc.actions[static_cast<std::size_t>(categorical(wc.probs, rng))];
}

double vanilla_action(const BidState&, int t, double center, const SafetyZone& zone, double sigma, double A_min,
                      double A_max, Rng& rng) {
  if (!zone.active(t)) return center;
  double lo = 0.0, hi = 0.0;
  if (!(zone.radius > 0.0) || !(sigma > 0.0) || !clipped_zone(center, zone.radius, A_min, A_max, lo, hi))
    return std::clamp(center, A_min, A_max);
  // exact rejection sampling
  if (sigma <= zone.radius) {
    std::normal_distribution<double> g(center, sigma);
    for (;;) {
      const double a = g(rng);
      if (a >= lo && a <= hi) return a;
    }
  }
  std::uniform_real_distribution<double> u(lo, hi);
  std::uniform_real_distribution<double> acc(0.0, 1.0);
  for (;;) {
    const double a = u(rng);
    const double d = a - center;
    if (acc(rng) < std::exp(-d * d / (2.0 * sigma * sigma))) return a;
  }
}

Policy ser_policy(Policy safe, const Net& critic, const FeatureScaling& fs, SafetyZone zone, SerConfig cfg,
                  const MarketConfig& market) {
  auto q = critic_row(critic, fs);
  const int T = market.T;
  const double lo = market.A_min, hi = market.A_max;
  return [safe = std::move(safe), q, zone, cfg, T, lo, hi](const BidState& s, Rng& rng) {
    const double center = safe(s, rng);
    return ser_action(s, T - s.time_left, center, q, zone, cfg, lo, hi, rng);
  };
}

Policy vanilla_policy(Policy safe, SafetyZone zone, double sigma, const MarketConfig& market) {
  const int T = market.T;
  const double lo = market.A_min, hi = market.A_max;
  return [safe = std::move(safe), zone, sigma, T, lo, hi](const BidState& s, Rng& rng) {
    const double center = safe(s, rng);
    return vanilla_action(s, T - s.time_left, center, zone, sigma, lo, hi, rng);
  };
}

}  // namespace sorl
