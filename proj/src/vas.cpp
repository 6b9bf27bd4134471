#include "sorl/vas.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace sorl {

std::size_t VasDataset::entry_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.size();
  return n;
}

VasDataset build_vas(const EpisodeTape& tape, const Trajectory& log, const MarketConfig& config) {
  if (log.records.empty()) throw std::invalid_argument("build_vas: empty log");
  if (log.stages.size() != log.records.size())
    throw ContractViolation("build_vas: log carries no stage results (record_stages was off)");
  VasDataset vas;
  vas.budget = log.metrics.budget;
  vas.T = config.T;
  vas.steps.resize(static_cast<std::size_t>(config.T));
  for (std::size_t k = 0; k < log.records.size(); ++k) {
    const auto t = static_cast<std::size_t>(log.records[k].t);
    const auto& imps = tape.steps.at(t);
    const auto& stage = log.stages[k];
    if (stage.size() != imps.size()) throw ContractViolation("build_vas: stage results do not match the tape");
    for (std::size_t j = 0; j < imps.size(); ++j) {
      if (!stage[j].passed_stage1) continue;
      vas.steps[t].push_back({static_cast<int>(t), imps[j].v2, imps[j].p2, imps[j].v, imps[j].p});
    }
  }
  return vas;
}

StepOutcome vas_step(const BidState& state, double action, std::span<const VasLogEntry> entries,
                     const MarketConfig& config) {
  if (!(action >= config.A_min && action <= config.A_max))
    throw ContractViolation("vas_step: action outside [A_min, A_max]");
  if (!(state.budget_left >= 0.0)) throw ContractViolation("vas_step: negative budget_left");
  StepOutcome out;
  double remaining = state.budget_left;
  for (const auto& e : entries) {
    if (action * e.v2 >= e.p2 && e.p <= remaining) {
      remaining -= e.p;
      out.reward += e.v;
      out.cost += e.p;
      ++out.won_count;
    }
  }
  out.next_state = {remaining, state.time_left - 1, state.budget_consumed + out.cost};
  out.terminated = out.next_state.time_left <= 0 || remaining < config.p_min;
  return out;
}

Trajectory run_vas_episode(const VasDataset& vas, const MarketConfig& config, const Policy& policy, Rng& rng) {
  Trajectory traj;
  BidState s{vas.budget, config.T, 0.0};
  traj.metrics.budget = vas.budget;
  double discount = 1.0;
  for (int t = 0; t < config.T; ++t) {
    const double a = std::clamp(policy(s, rng), config.A_min, config.A_max);
    std::span<const VasLogEntry> entries;
    if (t < static_cast<int>(vas.steps.size())) entries = vas.steps[static_cast<std::size_t>(t)];
    const auto out = vas_step(s, a, entries, config);
    TransitionRecord rec;
    rec.t = t;
    rec.s = s;
    rec.a = a;
    rec.r = out.reward;
    rec.cost = out.cost;
    rec.s_next = out.next_state;
    rec.done = out.terminated;
    rec.behavior_action = a;
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

namespace {

std::string num(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse(const std::string& s) {
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc()) throw std::runtime_error("read_vas: bad number '" + s + "'");
  return x;
}

}  // namespace

void write_vas(std::ostream& out, const VasDataset& vas) {
  out << "#sorl-records kind=vas-stage2 budget=" << num(vas.budget) << " T=" << vas.T << '\n';
  out << "t,v2,p2,v,p\n";
  for (const auto& step : vas.steps)
    for (const auto& e : step)
      out << e.t << ',' << num(e.v2) << ',' << num(e.p2) << ',' << num(e.v) << ',' << num(e.p) << '\n';
}

VasDataset read_vas(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("#sorl-records kind=vas-stage2", 0) != 0)
    throw std::runtime_error("read_vas: missing stage-2 log header");
  VasDataset vas;
  const auto bpos = line.find("budget=");
  const auto tpos = line.find("T=");
  if (bpos == std::string::npos || tpos == std::string::npos) throw std::runtime_error("read_vas: header lacks budget/T");
  vas.budget = parse(line.substr(bpos + 7, line.find(' ', bpos) - bpos - 7));
  vas.T = std::stoi(line.substr(tpos + 2));
  if (vas.T < 1) throw std::runtime_error("read_vas: T must be positive");
  vas.steps.resize(static_cast<std::size_t>(vas.T));
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& cell : f)
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("read_vas: expected 5 fields");
    VasLogEntry e{std::stoi(f[0]), parse(f[1]), parse(f[2]), parse(f[3]), parse(f[4])};
    if (e.t < 0 || e.t >= vas.T) throw std::runtime_error("read_vas: step index out of range");
    vas.steps[static_cast<std::size_t>(e.t)].push_back(e);
  }
  return vas;
}

}  // namespace sorl
