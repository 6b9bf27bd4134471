#include "sorl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace sorl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SORL_NUM(KEY, EXPR)                                                                        \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return fmt(static_cast<double>(c.EXPR)); },               \
        [](ExperimentConfig& c, const std::string& v) {                                            \
          c.EXPR = parse_number<std::remove_reference_t<decltype(c.EXPR)>>(KEY, v);                \
        }                                                                                          \
  }
#define SORL_INT(KEY, EXPR)                                                                        \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return std::to_string(c.EXPR); },                         \
        [](ExperimentConfig& c, const std::string& v) {                                            \
          c.EXPR = parse_number<std::remove_reference_t<decltype(c.EXPR)>>(KEY, v);                \
        }                                                                                          \
  }
#define SORL_BOOL(KEY, EXPR)                                                                       \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return std::string(c.EXPR ? "true" : "false"); },         \
        [](ExperimentConfig& c, const std::string& v) { c.EXPR = parse_bool(KEY, v); }             \
  }
#define SORL_LIST(KEY, EXPR)                                                                       \
  Field {                                                                                          \
    KEY, [](const ExperimentConfig& c) { return join(c.EXPR); },                                   \
        [](ExperimentConfig& c, const std::string& v) {                                            \
          c.EXPR = parse_list<typename std::remove_reference_t<decltype(c.EXPR)>::value_type>(KEY, v); \
        }                                                                                          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SORL_INT("market.T", market.T),
      SORL_INT("market.n_min", market.n_min),
      SORL_INT("market.n_max", market.n_max),
      SORL_NUM("market.B_min", market.B_min),
      SORL_NUM("market.B_max", market.B_max),
      SORL_NUM("market.v_M", market.v_M),
      SORL_NUM("market.p_M", market.p_M),
      SORL_NUM("market.A_min", market.A_min),
      SORL_NUM("market.A_max", market.A_max),
      SORL_INT("market.n_competitors", market.n_competitors),
      SORL_NUM("market.competitor_bid_min", market.competitor_bid_min),
      SORL_NUM("market.competitor_bid_max", market.competitor_bid_max),
      SORL_INT("market.stage2_slots", market.stage2_slots),
      SORL_NUM("market.value_noise", market.value_noise),
      SORL_NUM("market.v_min", market.v_min),
      SORL_NUM("market.p_min", market.p_min),
      SORL_NUM("market.gamma", market.gamma),
      SORL_INT("market.seed", market.seed),

      SORL_NUM("features.reward_scale", reward_scale),
      SORL_NUM("features.action_center", action_center),
      SORL_NUM("features.action_span", action_span),

      SORL_NUM("ddpg.actor_lr", ddpg.actor_lr),
      SORL_NUM("ddpg.critic_lr", ddpg.critic_lr),
      SORL_NUM("ddpg.tau", ddpg.tau),
      SORL_INT("ddpg.buffer_capacity", ddpg.buffer_capacity),
      SORL_INT("ddpg.batch_size", ddpg.batch_size),
      SORL_NUM("ddpg.gamma", ddpg.gamma),
      SORL_NUM("ddpg.exploration_variance", ddpg.exploration_variance),
      SORL_INT("ddpg.episodes", ddpg.episodes),
      SORL_INT("ddpg.updates_per_step", ddpg.updates_per_step),
      SORL_LIST("ddpg.hidden", ddpg.shape.hidden),
      SORL_INT("ddpg.seed", ddpg.seed),
      SORL_LIST("ddpg.snapshot_episodes", ddpg.snapshot_episodes),
      SORL_INT("ddpg.eval_episodes", ddpg.eval_episodes),
      SORL_INT("ddpg.select_every", ddpg.select_every),
      SORL_INT("ddpg.select_episodes", ddpg.select_episodes),
      SORL_LIST("ddpg.gate_bids", ddpg.gate_bids),

      SORL_INT("sorl.max_iterations", sorl.max_iterations),
      SORL_INT("sorl.warm_episodes", sorl.warm_episodes),
      SORL_INT("sorl.episodes_per_round", sorl.episodes_per_round),
      SORL_INT("sorl.eval_episodes", sorl.eval_episodes),
      SORL_NUM("sorl.convergence_tol", sorl.convergence_tol),
      SORL_NUM("sorl.safety_fraction", sorl.safety_fraction),
      SORL_BOOL("sorl.vanilla_arm", sorl.vanilla_arm),
      SORL_BOOL("sorl.warm_start", sorl.warm_start),
      SORL_INT("sorl.seed", sorl.seed),

      SORL_NUM("zone.radius", sorl.zone.radius),
      SORL_INT("zone.t1", sorl.zone.t1),
      SORL_INT("zone.t2", sorl.zone.t2),

      SORL_NUM("ser.sigma", sorl.ser.sigma),
      SORL_NUM("ser.lambda", sorl.ser.lambda),
      SORL_INT("ser.candidates", sorl.ser.candidates),

      SORL_NUM("boot.alpha1", sorl.boot.alpha1),
      SORL_NUM("boot.alpha2", sorl.boot.alpha2),
      SORL_NUM("boot.beta", sorl.boot.beta),
      SORL_NUM("boot.gamma", sorl.boot.gamma),
      SORL_NUM("boot.actor_lr", sorl.boot.actor_lr),
      SORL_NUM("boot.critic_lr", sorl.boot.critic_lr),
      SORL_NUM("boot.tau", sorl.boot.tau),
      SORL_INT("boot.batch_size", sorl.boot.batch_size),
      SORL_INT("boot.action_samples", sorl.boot.action_samples),
      SORL_INT("boot.steps", sorl.boot.steps),

      SORL_NUM("vcql.alpha1", sorl.iterate.alpha1),
      SORL_NUM("vcql.alpha2", sorl.iterate.alpha2),
      SORL_NUM("vcql.beta", sorl.iterate.beta),
      SORL_NUM("vcql.gamma", sorl.iterate.gamma),
      SORL_NUM("vcql.actor_lr", sorl.iterate.actor_lr),
      SORL_NUM("vcql.critic_lr", sorl.iterate.critic_lr),
      SORL_NUM("vcql.tau", sorl.iterate.tau),
      SORL_INT("vcql.batch_size", sorl.iterate.batch_size),
      SORL_INT("vcql.action_samples", sorl.iterate.action_samples),
      SORL_INT("vcql.steps", sorl.iterate.steps),

      SORL_INT("verify.episodes", verify_episodes),
      SORL_LIST("verify.radii", verify_radii),
      SORL_LIST("verify.t1", verify_t1),
      SORL_LIST("verify.windows", verify_windows),

      SORL_INT("sweep.seeds", sweep_seeds),
      SORL_INT("sweep.eval_episodes", sweep_eval_episodes),

      SORL_LIST("run.seeds", seeds),
      Field{"run.output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
            [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef SORL_NUM
#undef SORL_INT
#undef SORL_BOOL
#undef SORL_LIST

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(key + ": unknown key");
}

}  // namespace

void ExperimentConfig::validate() const {
  market.validate();
  ddpg.validate();
  sorl.validate(market.T);
  if (!(reward_scale > 0.0)) throw ConfigError("features.reward_scale: must be > 0");
  if (action_span < 0.0) throw ConfigError("features.action_span: must be >= 0");
  if (verify_episodes < 1) throw ConfigError("verify.episodes: must be >= 1");
  if (sweep_seeds < 1) throw ConfigError("sweep.seeds: must be >= 1");
  if (sweep_eval_episodes < 1) throw ConfigError("sweep.eval_episodes: must be >= 1");
  if (seeds.empty()) throw ConfigError("run.seeds: need at least one seed");
  for (int t : verify_t1)
    if (t < 0 || t >= market.T) throw ConfigError("verify.t1: entries must lie in [0, T-1]");
  for (int w : verify_windows)
    if (w < 1) throw ConfigError("verify.windows: entries must be >= 1");
  for (double r : verify_radii)
    if (r < 0.0) throw ConfigError("verify.radii: entries must be >= 0");
}

FeatureScaling ExperimentConfig::scaling() const {
  auto fs = FeatureScaling::for_market(market, reward_scale);
  if (action_span > 0.0) {
    fs.action_center = action_center;
    fs.action_span = action_span;
  }
  return fs;
}

VerifyConfig ExperimentConfig::verify_config() const {
  VerifyConfig v;
  v.episodes = verify_episodes;
  v.ser = sorl.ser;
  v.seed = mix_seed(sorl.seed, 0x7E41F);
  v.grid.push_back({0.0, 0, market.T});
  for (double r : verify_radii)
    for (int t1 : verify_t1)
      for (int w : verify_windows) v.grid.push_back({r, t1, std::min(w, market.T - t1)});
  return v;
}

SorlConfig ExperimentConfig::sorl_config() const {
  SorlConfig s = sorl;
  s.boot.shape = ddpg.shape;
  s.iterate.shape = ddpg.shape;
  return s;
}

ExperimentConfig full_preset() {
  ExperimentConfig c;
  c.market = MarketConfig{};
  c.market.B_min = 100000.0;
  c.market.B_max = 200000.0;
  c.ddpg = DdpgConfig{};
  c.ddpg.episodes = 1000;
  c.sorl.zone = {0.5, 0, c.market.T - 1};
  c.sorl.ser = {1.0, 0.1, 1000};
  c.sorl.boot = VcqlConfig{};
  c.sorl.iterate = VcqlConfig{};
  c.sorl.episodes_per_round = 100;
  c.sorl.warm_episodes = 100;
  c.sorl.eval_episodes = 100;
  c.reward_scale = 0.01;
  c.output_dir = "runs/full";
  return c;
}

ExperimentConfig desk_preset() {
  ExperimentConfig c;
  auto& m = c.market;
  m.T = 96;
  m.n_min = 100;
  m.n_max = 500;
  m.competitor_bid_min = 1.0;
  m.competitor_bid_max = 3.0;
  m.p_M = 3.0;
  m.A_min = 0.25;
  m.A_max = 10.0;
  m.B_min = 15000.0;
  m.B_max = 30000.0;
  m.gamma = 1.0;
  m.seed = 2024;

  c.reward_scale = 0.01;
  c.action_center = 5.0;
  c.action_span = 2.5;

  c.ddpg.episodes = 150;
  c.ddpg.exploration_variance = 0.25;
  c.ddpg.gamma = m.gamma;
  c.ddpg.seed = 7;
  c.ddpg.select_every = 5;
  c.ddpg.snapshot_episodes = {5, 20};
  c.ddpg.eval_episodes = 20;
  c.ddpg.gate_bids = {3, 3.25, 3.5, 3.75, 4, 4.25, 4.5, 4.75, 5, 5.25, 5.5, 5.75, 6};

  c.sorl.max_iterations = 5;
  c.sorl.warm_episodes = 20;
  c.sorl.episodes_per_round = 20;
  c.sorl.eval_episodes = 20;
  c.sorl.zone = {0.5, 0, m.T - 1};
  c.sorl.ser = {1.0, 0.1, 1000};
  c.sorl.boot.gamma = m.gamma;
  c.sorl.boot.steps = 1000;
  c.sorl.iterate.gamma = m.gamma;
  c.sorl.iterate.steps = 600;
  c.output_dir = "runs/desk";
  return c;
}

ExperimentConfig load_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      find_field(key).set(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  base.validate();
  return base;
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return load_config(in, std::move(base));
}

void save_config(std::ostream& out, const ExperimentConfig& cfg) {
  std::string section;
  for (const auto& f : fields()) {
    const auto sec = f.key.substr(0, f.key.find('.'));
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << "# " << sec << '\n';
      section = sec;
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
  find_field(trim(assignment.substr(0, eq))).set(cfg, trim(assignment.substr(eq + 1)));
}

}  // namespace sorl
