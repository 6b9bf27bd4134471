#include "sorl/market.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace sorl {

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ConfigError(std::string("market.") + field + ": " + why);
}

std::string fmt_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc()) throw std::runtime_error("bad number in record: '" + s + "'");
  return x;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) noexcept {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void MarketConfig::validate() const {
  require(T >= 1, "T", "must be >= 1");
  require(n_min >= 1, "n_min", "must be >= 1");
  require(n_min <= n_max, "n_max", "must be >= n_min");
  require(B_min >= 0.0, "B_min", "must be >= 0");
  require(B_min <= B_max, "B_max", "must be >= B_min");
  require(v_M > 0.0, "v_M", "must be > 0");
  require(p_M > 0.0, "p_M", "must be > 0");
  require(A_min > 0.0, "A_min", "must be > 0");
  require(A_min < A_max, "A_max", "must be > A_min");
  require(n_competitors >= 1, "n_competitors", "must be >= 1");
  require(stage2_slots >= 1 && stage2_slots <= n_competitors, "stage2_slots",
          "must be in [1, n_competitors]");
  require(competitor_bid_min > 0.0, "competitor_bid_min", "must be > 0");
  require(competitor_bid_min <= competitor_bid_max, "competitor_bid_max",
          "must be >= competitor_bid_min");
  require(value_noise >= 0.0, "value_noise", "must be >= 0");
  require(v_min > 0.0 && v_min <= v_M, "v_min", "must be in (0, v_M]");
  require(p_min > 0.0 && p_min <= p_M, "p_min", "must be in (0, p_M]");
  require(gamma >= 0.0 && gamma <= 1.0, "gamma", "must be in [0, 1]");
}

Market::Market(MarketConfig config) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(config_.seed, 0xC0417E7170ULL));
  std::uniform_real_distribution<double> bid(config_.competitor_bid_min, config_.competitor_bid_max);
  competitor_bids_.resize(static_cast<std::size_t>(config_.n_competitors));
  for (double& b : competitor_bids_) b = bid(rng);
}

std::vector<ImpressionOpportunity> Market::generate_impressions(int t, Rng& rng) const {
  if (t < 1 || t > config_.T) throw ContractViolation("generate_impressions: t outside [1, T]");
  const auto& c = config_;
  std::uniform_int_distribution<int> count(c.n_min, c.n_max);
  std::uniform_real_distribution<double> value(c.v_min, c.v_M);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto clamp_value = [&](double v) { return std::clamp(v, c.v_min, c.v_M); };
  const auto clamp_price = [&](double p) { return std::clamp(p, c.p_min, c.p_M); };

  const int n = count(rng);
  const std::size_t n_comp = competitor_bids_.size();
  const auto slots = static_cast<std::size_t>(c.stage2_slots);
  std::vector<double> rough(n_comp);
  std::vector<double> ecpm(n_comp);
  std::vector<double> top(slots);  // largest eCPMs so far, descending
  std::vector<ImpressionOpportunity> out(static_cast<std::size_t>(n));

  for (auto& imp : out) {
    std::size_t filled = 0;
    for (std::size_t i = 0; i < n_comp; ++i) {
      rough[i] = value(rng);
      const double e = competitor_bids_[i] * rough[i];
      ecpm[i] = e;
      if (filled < slots || e > top[slots - 1]) {
        std::size_t j = filled < slots ? filled++ : slots - 1;
        while (j > 0 && top[j - 1] < e) {
          top[j] = top[j - 1];
          --j;
        }
        top[j] = e;
      }
    }
    // Stage 1 admits the `slots` largest competitor eCPMs.
    const double threshold = top[slots - 1];
    double best_stage2 = 0.0;
    for (std::size_t k = 0; k < n_comp; ++k) {
      if (ecpm[k] < threshold) continue;
      const double accurate = clamp_value(rough[k] * std::exp(c.value_noise * noise(rng)));
      best_stage2 = std::max(best_stage2, competitor_bids_[k] * accurate);
    }
    imp.v2 = value(rng);
    imp.v1 = clamp_value(imp.v2 * std::exp(c.value_noise * noise(rng)));
    imp.v = imp.v2;
    imp.p1 = clamp_price(threshold);
    imp.p2 = clamp_price(best_stage2);
    imp.p = imp.p2;
  }
  return out;
}

double Market::draw_budget(Rng& rng) const {
  if (config_.B_min == config_.B_max) return config_.B_min;
  return std::uniform_real_distribution<double>(config_.B_min, config_.B_max)(rng);
}

EpisodeTape Market::draw_episode(std::uint64_t episode_seed) const {
  Rng rng(episode_seed);
  EpisodeTape tape;
  tape.budget = draw_budget(rng);
  tape.steps.reserve(static_cast<std::size_t>(config_.T));
  for (int t = 1; t <= config_.T; ++t) tape.steps.push_back(generate_impressions(t, rng));
  return tape;
}

StepOutcome auction_step(const BidState& state, double action,
                         std::span<const ImpressionOpportunity> imps, const MarketConfig& config,
                         std::vector<StageResult>* stages) {
  if (!(action >= config.A_min && action <= config.A_max))
    throw ContractViolation("auction_step: action " + fmt_double(action) + " outside [A_min, A_max]");
  if (!(state.budget_left >= 0.0)) throw ContractViolation("auction_step: negative budget_left");

  StepOutcome out;
  double remaining = state.budget_left;
  if (stages) stages->assign(imps.size(), StageResult{});
  for (std::size_t j = 0; j < imps.size(); ++j) {
    const auto& imp = imps[j];
    const bool pass1 = action * imp.v1 >= imp.p1;
    const bool pass2 = action * imp.v2 >= imp.p2;
    const bool won = pass1 && pass2 && imp.p <= remaining;
    if (won) {
      remaining -= imp.p;
      out.reward += imp.v;
      out.cost += imp.p;
      ++out.won_count;
    }
    if (stages) (*stages)[j] = StageResult{pass1, pass2, won};
  }
  out.next_state.budget_left = remaining;
  out.next_state.budget_consumed = state.budget_consumed + out.cost;
  out.next_state.time_left = state.time_left - 1;
  out.terminated = out.next_state.time_left <= 0 || remaining < config.p_min;
  return out;
}

Trajectory run_episode(const EpisodeTape& tape, const MarketConfig& config, const Policy& policy,
                       Rng& policy_rng, const EpisodeOptions& options) {
  Trajectory traj;
  traj.records.reserve(static_cast<std::size_t>(config.T));
  BidState s{tape.budget, config.T, 0.0};
  traj.metrics.budget = tape.budget;
  double discount = 1.0;
  for (int t = 0; t < config.T && t < static_cast<int>(tape.steps.size()); ++t) {
    const double a = std::clamp(policy(s, policy_rng), config.A_min, config.A_max);
    const double query = options.behavior_query
                             ? std::clamp(options.behavior_query(s, policy_rng), config.A_min, config.A_max)
                             : a;
    std::vector<StageResult> stage;
    const auto out = auction_step(s, a, tape.steps[static_cast<std::size_t>(t)], config,
                                  options.record_stages ? &stage : nullptr);
    if (options.record_stages) traj.stages.push_back(std::move(stage));

    TransitionRecord rec;
    rec.t = t;
    rec.s = s;
    rec.a = a;
    rec.r = out.reward;
    rec.cost = out.cost;
    rec.s_next = out.next_state;
    rec.done = out.terminated;
    rec.behavior_action = query;
    traj.records.push_back(rec);

    traj.metrics.buy_cnt += out.reward;
    traj.metrics.con_bdg += out.cost;
    traj.metrics.won_count += out.won_count;
    traj.metrics.discounted_value += discount * out.reward;
    discount *= config.gamma;
    s = out.next_state;
    if (out.terminated) break;
  }
  traj.metrics.steps = static_cast<int>(traj.records.size());
  return traj;
}

Trajectory run_episode(const Market& market, const Policy& policy, std::uint64_t episode_seed,
                       Rng& policy_rng, const EpisodeOptions& options) {
  return run_episode(market.draw_episode(episode_seed), market.config(), policy, policy_rng, options);
}

Policy constant_policy(double bid) {
  return [bid](const BidState&, Rng&) { return bid; };
}

void write_trajectory(std::ostream& out, std::span<const TransitionRecord> records) {
  out << "#sorl-records kind=trajectory\n";
  out << "t,budget_left,time_left,budget_consumed,a,r,cost,next_budget_left,next_time_left,"
         "next_budget_consumed,done,round,behavior_action\n";
  for (const auto& r : records) {
    out << r.t << ',' << fmt_double(r.s.budget_left) << ',' << r.s.time_left << ','
        << fmt_double(r.s.budget_consumed) << ',' << fmt_double(r.a) << ',' << fmt_double(r.r) << ','
        << fmt_double(r.cost) << ',' << fmt_double(r.s_next.budget_left) << ',' << r.s_next.time_left
        << ',' << fmt_double(r.s_next.budget_consumed) << ',' << (r.done ? 1 : 0) << ',' << r.round
        << ',' << fmt_double(r.behavior_action) << '\n';
  }
}

std::vector<TransitionRecord> read_trajectory(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#sorl-records kind=trajectory", 0) != 0)
    throw std::runtime_error("read_trajectory: missing trajectory header");
  if (!std::getline(in, line)) throw std::runtime_error("read_trajectory: missing column header");
  std::vector<TransitionRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 13) throw std::runtime_error("read_trajectory: expected 13 fields, got " + std::to_string(f.size()));
    TransitionRecord r;
    r.t = std::stoi(f[0]);
    r.s = {parse_double(f[1]), std::stoi(f[2]), parse_double(f[3])};
    r.a = parse_double(f[4]);
    r.r = parse_double(f[5]);
    r.cost = parse_double(f[6]);
    r.s_next = {parse_double(f[7]), std::stoi(f[8]), parse_double(f[9])};
    r.done = f[10] == "1";
    r.round = std::stoi(f[11]);
    r.behavior_action = parse_double(f[12]);
    out.push_back(r);
  }
  return out;
}

}  // namespace sorl
