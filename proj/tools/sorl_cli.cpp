// Command-line front end: safe-policy training, the SORL loop, bound checks,
// offline evaluation and seed sweeps. Every subcommand writes a manifest.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "sorl/config.hpp"

namespace fs = std::filesystem;
using namespace sorl;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kRuntime = 3, kMissingInput = 4 };

struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

struct Run {
  ExperimentConfig cfg;
  fs::path out;
  std::string command;
  std::vector<fs::path> artifacts;

  fs::path file(const std::string& rel) {
    const fs::path p = out / rel;
    fs::create_directories(p.parent_path());
    artifacts.push_back(p);
    return p;
  }

  void write_manifest(const std::vector<std::string>& argv) const {
    const fs::path p = out / ("manifest-" + command + ".txt");
    std::ofstream m(p);
    if (!m) throw std::runtime_error("cannot write " + p.string());
    m << "#sorl-manifest v1\n";
    m << "command = " << command << '\n';
    m << "argv =";
    for (const auto& a : argv) m << ' ' << a;
    m << "\n\n[config]\n";
    save_config(m, cfg);
    m << "\n[artifacts]\n";
    for (const auto& a : artifacts)
      if (fs::exists(a)) m << sha256_file(a) << "  " << fs::relative(a, out).string() << '\n';
  }
};

void save_net(const fs::path& p, const Net& net, const std::string& tag) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  save_checkpoint(out, net, tag);
}

Net load_net(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw MissingInput("missing checkpoint " + p.string() + " (run train-safe first or pass --safe)");
  return load_checkpoint(in);
}

struct SafeNets {
  Net actor;
  Net critic;
};

SafeNets load_safe(const fs::path& dir) { return {load_net(dir / "actor.ckpt"), load_net(dir / "critic.ckpt")}; }

// ---------------------------------------------------------------------------

void cmd_train_safe(Run& run) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto res = train_safe_policy(market, run.cfg.ddpg, scaling);
  save_net(run.file("safe/actor.ckpt"), res.actor, "actor");
  save_net(run.file("safe/critic.ckpt"), res.critic, "critic");
  for (const auto& [ep, net] : res.critic_snapshots)
    save_net(run.file("safe/critic_ep" + std::to_string(ep) + ".ckpt"), net, "critic");
  write_training_curve(run.file("safe/training_curve.csv").string(), res.curve);
  std::ofstream gate(run.file("safe/gate.csv"));
  gate << "selected_episode,selected_buy_cnt,eval_buy_cnt,best_constant_bid,best_constant_buy_cnt,gate\n"
       << res.selected_episode << ',' << res.selected_buy_cnt << ',' << res.eval_buy_cnt << ',' << res.best_gate_bid
       << ',' << res.best_gate_buy_cnt << ',' << (res.gate_passed ? "pass" : "FAIL") << '\n';
  std::printf("safe policy: eval BuyCnt %.2f, best constant bid %.3g -> %.2f, gate %s\n", res.eval_buy_cnt,
              res.best_gate_bid, res.best_gate_buy_cnt, res.gate_passed ? "passed" : "FAILED");
}

void cmd_sorl(Run& run, const fs::path& safe_dir) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto safe = load_safe(safe_dir);
  std::map<int, std::vector<IterationMetrics>> by_tau;
  for (std::uint64_t seed : run.cfg.seeds) {
    auto sc = run.cfg.sorl_config();
    sc.seed = seed;
    const std::string dir = "sorl/seed" + std::to_string(seed) + "/";
    const auto st = run_sorl(market, safe.actor, safe.critic, scaling, sc, run.file(dir + "iterations.csv").string());
    for (std::size_t k = 0; k < st.actors.size(); ++k) {
      save_net(run.file(dir + "actor_" + std::to_string(k) + ".ckpt"), st.actors[k], "actor");
      save_net(run.file(dir + "critic_" + std::to_string(k) + ".ckpt"), st.critics[k], "critic");
    }
    for (const auto& row : st.metrics) by_tau[row.tau].push_back(row);
    std::printf("seed %llu: %zu iterations\n", static_cast<unsigned long long>(seed), st.metrics.size() - 1);
  }
  std::ofstream out(run.file("sorl/summary.csv"));
  out << "tau,seeds,v_safe,v_explore,v_vanilla,v_policy,v_policy_safe,rr_star,safety_gate\n";
  for (const auto& [tau, rows] : by_tau) {
    double vs = 0, ve = 0, vv = 0, vp = 0, vps = 0, rr = 0;
    int nv = 0;
    for (const auto& r : rows) {
      vs += r.v_safe;
      ve += r.v_explore;
      if (r.v_vanilla) {
        vv += *r.v_vanilla;
        ++nv;
      }
      vp += r.v_policy;
      vps += r.v_policy_safe;
      rr += r.rr_star;
    }
    const double n = static_cast<double>(rows.size());
    const bool gate = ve >= (1.0 - run.cfg.sorl.safety_fraction) * vs;
    out << tau << ',' << rows.size() << ',' << vs / n << ',' << ve / n << ',';
    if (nv) out << vv / nv;
    out << ',' << vp / n << ',' << vps / n << ',' << rr / n << ',' << (gate ? "pass" : "FAIL") << '\n';
    std::printf("tau %d: safe %.1f explore %.1f policy %.1f R/R* %.3f %s\n", tau, vs / n, ve / n, vp / n, rr / n,
                gate ? "" : "SAFETY GATE FAILED");
  }
}

void cmd_verify(Run& run, const fs::path& safe_dir) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto safe = load_safe(safe_dir);
  const auto rep = verify_bounds(market, actor_policy(safe.actor, scaling), safe.critic, scaling,
                                 run.cfg.verify_config());
  std::ofstream out(run.file("verify/verify.csv"));
  out << "radius,t1,window,v_safe,v_explore,gap,bound,passed\n";
  for (const auto& r : rep.rows)
    out << r.point.radius << ',' << r.point.t1 << ',' << r.point.window << ',' << r.v_safe << ',' << r.v_explore << ','
        << r.gap << ',' << r.bound << ',' << (r.passed ? "pass" : "FAIL") << '\n';
  std::ofstream k(run.file("verify/constants.csv"));
  const auto& c = rep.constants;
  k << "k1,k2,k3,k4,L_r,L_Q,max_reward_slope,states\n"
    << c.k1 << ',' << c.k2 << ',' << c.k3 << ',' << c.k4 << ',' << c.L_r << ',' << c.L_Q << ',' << c.max_reward_slope
    << ',' << c.states << '\n';
  std::printf("L_r %.4g  L_Q %.4g  rows %zu  all within bound: %s\n", c.L_r, c.L_Q, rep.rows.size(),
              rep.all_passed ? "yes" : "no");
}

std::vector<NamedPolicy> named_policies(const std::vector<std::string>& specs, const std::vector<double>& bids,
                                        const FeatureScaling& scaling) {
  std::vector<NamedPolicy> out;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const fs::path path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    out.push_back({name, actor_policy(load_net(path), scaling)});
  }
  for (double b : bids) {
    std::ostringstream name;
    name << "const-" << b;
    out.push_back({name.str(), constant_policy(b)});
  }
  return out;
}

void cmd_iboo(Run& run, const fs::path& safe_dir, const std::vector<std::string>& specs, const std::vector<double>& bids,
              int episodes) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto safe = load_safe(safe_dir);
  auto policies = named_policies(specs, bids, scaling);
  if (policies.empty()) throw std::invalid_argument("iboo: give at least one --policy or --bids entry");
  const auto tapes = make_tapes(market, mix_seed(run.cfg.sorl.seed, 0x1B00), episodes);
  const auto vas = build_vas_set(actor_policy(safe.actor, scaling), tapes, run.cfg.market);
  const auto rep = iboo_report(policies, vas, tapes, run.cfg.market);
  std::ofstream out(run.file("iboo/iboo.csv"));
  out << "policy,vas_rr_star,sras_buy_cnt,vas_rank,sras_rank\n";
  for (const auto& r : rep.rows)
    out << r.name << ',' << r.vas_rr << ',' << r.sras_buy_cnt << ',' << r.vas_rank << ',' << r.sras_rank << '\n';
  std::ofstream s(run.file("iboo/summary.csv"));
  s << "policies,spearman,inversions\n" << rep.rows.size() << ',';
  if (rep.correlation) s << *rep.correlation;
  s << ',' << rep.inversions << '\n';
  if (rep.correlation)
    std::printf("Spearman %.4f, %d inversions over %zu policies\n", *rep.correlation, rep.inversions, rep.rows.size());
  else
    std::printf("Spearman undefined (%zu policies)\n", rep.rows.size());
}

void cmd_ope(Run& run, const fs::path& safe_dir, const std::vector<std::string>& specs, const std::vector<double>& bids,
             int episodes) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto safe = load_safe(safe_dir);
  auto policies = named_policies(specs, bids, scaling);
  policies.insert(policies.begin(), {"safe", actor_policy(safe.actor, scaling)});
  const auto tapes = make_tapes(market, mix_seed(run.cfg.sorl.seed, 0x0BE0), episodes);
  const auto vas = build_vas_set(policies.front().policy, tapes, run.cfg.market);
  std::ofstream out(run.file("ope/ope.csv"));
  out << "policy,rr_star,vas_buy_cnt\n";
  for (const auto& p : policies) {
    const double rr = ope_rr_star(p.policy, vas, run.cfg.market);
    const double buy = evaluate_vas(p.policy, vas, run.cfg.market).buy_cnt;
    out << p.name << ',' << rr << ',' << buy << '\n';
    std::printf("%-16s R/R* %.4f  VAS BuyCnt %.2f\n", p.name.c_str(), rr, buy);
  }
}

void cmd_seed_sweep(Run& run, const fs::path& safe_dir) {
  const Market market(run.cfg.market);
  const auto scaling = run.cfg.scaling();
  const auto safe = load_safe(safe_dir);
  auto sc = run.cfg.sorl_config();
  sc.eval_episodes = run.cfg.sweep_eval_episodes;
  const auto data = collect_boot_data(market, safe.actor, scaling, sc);
  const auto tapes = evaluation_tapes(market, sc);
  const auto vas = build_vas_set(actor_policy(safe.actor, scaling), tapes, run.cfg.market);
  std::vector<std::uint64_t> seeds;
  for (int i = 1; i <= run.cfg.sweep_seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  const OfflineInit init{safe.actor, safe.critic};
  const auto rows = variance_sweep(data, safe.critic, sc.boot, scaling, seeds, tapes, vas, run.cfg.market,
                                   sc.warm_start ? &init : nullptr);
  write_sweep_csv(run.file("sweep/sweep.csv").string(), rows);
  for (const char* method : {"vcql", "cql-h"}) {
    double s = 0, ss = 0;
    int n = 0;
    for (const auto& r : rows)
      if (r.method == method) {
        s += r.buy_cnt;
        ss += r.buy_cnt * r.buy_cnt;
        ++n;
      }
    const double mean = s / n;
    const double sd = n > 1 ? std::sqrt(std::max(0.0, (ss - n * mean * mean) / (n - 1))) : 0.0;
    std::printf("%-6s mean %.2f  std %.2f  (%d seeds)\n", method, mean, sd, n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe offline-to-online auto-bidding lab"};
  app.require_subcommand(1);

  std::string config_path, preset = "desk", out_dir;
  std::vector<std::string> overrides;
  bool force = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "config file (key = value lines)");
    sub->add_option("--preset", preset, "base values: desk or full")->check(CLI::IsMember({"desk", "full"}));
    sub->add_option("-s,--set", overrides, "override, key=value (repeatable)");
    sub->add_option("-o,--out", out_dir, "output directory (default run.output_dir)");
    sub->add_flag("--force", force, "overwrite an existing run of this subcommand");
  };

  std::string safe_dir;
  std::vector<std::string> policy_specs;
  std::vector<double> bids;
  int episodes = 20;

  auto* train = app.add_subcommand("train-safe", "train the safe policy and gate it against constant bids");
  add_common(train);
  auto* sorl_cmd = app.add_subcommand("sorl", "warm boot plus SORL iterations, one run per configured seed");
  add_common(sorl_cmd);
  auto* verify = app.add_subcommand("verify", "measured exploration gaps against the Lipschitz bound");
  add_common(verify);
  auto* iboo = app.add_subcommand("iboo", "rank agreement between VAS replay and the simulated market");
  add_common(iboo);
  auto* ope = app.add_subcommand("ope", "R/R* of checkpoints in VAS built from safe-policy logs");
  add_common(ope);
  auto* sweep = app.add_subcommand("seed-sweep", "V-CQL against CQL(H) over seeds on one boot dataset");
  add_common(sweep);
  for (auto* sub : {sorl_cmd, verify, iboo, ope, sweep})
    sub->add_option("--safe", safe_dir, "directory with actor.ckpt and critic.ckpt (default <out>/safe)");
  for (auto* sub : {iboo, ope}) {
    sub->add_option("-p,--policy", policy_specs, "actor checkpoint, optionally name=path (repeatable)");
    sub->add_option("--bids", bids, "constant-bid policies")->delimiter(',');
    sub->add_option("-n,--episodes", episodes, "logged episodes")->check(CLI::PositiveNumber);
  }

  auto* gen = app.add_subcommand("gen-config", "print every key with its default value");
  std::string gen_preset = "desk", gen_out;
  gen->add_option("--preset", gen_preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  gen->add_option("-o,--out", gen_out, "write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (gen->parsed()) {
      const auto cfg = gen_preset == "full" ? full_preset() : desk_preset();
      if (gen_out.empty()) {
        save_config(std::cout, cfg);
      } else {
        std::ofstream out(gen_out);
        if (!out) throw std::runtime_error("cannot write " + gen_out);
        save_config(out, cfg);
      }
      return kOk;
    }

    Run run;
    run.command = app.get_subcommands().front()->get_name();
    const auto base = preset == "full" ? full_preset() : desk_preset();
    if (!config_path.empty()) {
      if (!fs::exists(config_path)) throw MissingInput("missing config " + config_path);
      run.cfg = load_config_file(config_path, base);
    } else {
      run.cfg = base;
    }
    for (const auto& o : overrides) apply_override(run.cfg, o);
    if (!out_dir.empty()) run.cfg.output_dir = out_dir;
    run.cfg.validate();
    run.out = run.cfg.output_dir;
    const fs::path safe = safe_dir.empty() ? run.out / "safe" : fs::path(safe_dir);

    const fs::path manifest = run.out / ("manifest-" + run.command + ".txt");
    if (fs::exists(manifest) && !force)
      throw std::invalid_argument(manifest.string() + " exists; pick another --out or pass --force");
    fs::create_directories(run.out);

    if (run.command == "train-safe") cmd_train_safe(run);
    else if (run.command == "sorl") cmd_sorl(run, safe);
    else if (run.command == "verify") cmd_verify(run, safe);
    else if (run.command == "iboo") cmd_iboo(run, safe, policy_specs, bids, episodes);
    else if (run.command == "ope") cmd_ope(run, safe, policy_specs, bids, episodes);
    else if (run.command == "seed-sweep") cmd_seed_sweep(run, safe);

    run.write_manifest(std::vector<std::string>(argv, argv + argc));
    return kOk;
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMissingInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return kRuntime;
  }
}
