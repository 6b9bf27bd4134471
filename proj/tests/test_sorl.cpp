#include <doctest.h>

#include "sorl/sorl.hpp"

using namespace sorl;

namespace {

MarketConfig loop_market() {
  MarketConfig c;
  c.T = 6;
  c.n_min = 8;
  c.n_max = 12;
  c.B_min = 10.0;
  c.B_max = 20.0;
  c.p_M = 3.0;
  c.A_min = 0.25;
  c.A_max = 10.0;
  c.n_competitors = 20;
  c.stage2_slots = 4;
  return c;
}

SorlConfig loop_config(const MarketConfig& m) {
  SorlConfig s;
  s.max_iterations = 2;
  s.warm_episodes = 3;
  s.episodes_per_round = 3;
  s.eval_episodes = 3;
  s.zone = {0.5, 0, m.T - 1};
  s.ser = {0.5, 0.1, 16};
  for (VcqlConfig* v : {&s.boot, &s.iterate}) {
    v->shape.hidden = {8};
    v->steps = 10;
    v->batch_size = 8;
    v->action_samples = 4;
    v->log_every = 5;
  }
  s.seed = 5;
  return s;
}

struct SafePair {
  Net actor;
  Net critic;
};

SafePair safe_nets() {
  NetShape shape;
  shape.hidden = {8};
  Rng rng(1);
  return {make_actor(shape, rng), make_critic(shape, rng)};
}

}  // namespace

TEST_SUITE("sorl") {
  TEST_CASE("an empty boot dataset is rejected") {
    const auto mc = loop_market();
    Market m(mc);
    const auto fs = FeatureScaling::for_market(mc, 0.1);
    auto cfg = loop_config(mc);
    cfg.warm_episodes = 0;
    const auto nets = safe_nets();
    CHECK_THROWS_AS(warm_boot(m, nets.actor, nets.critic, fs, cfg), std::invalid_argument);
  }

  TEST_CASE("boot data is tagged safe and each round adds one tagged round") {
    const auto mc = loop_market();
    Market m(mc);
    const auto fs = FeatureScaling::for_market(mc, 0.1);
    const auto cfg = loop_config(mc);
    const auto nets = safe_nets();
    const auto st = run_sorl(m, nets.actor, nets.critic, fs, cfg);
    REQUIRE(st.data.rounds().size() == 3);
    CHECK(st.data.rounds()[0].tag == "safe");
    CHECK(st.data.rounds()[1].tag == "ser-1");
    CHECK(st.data.rounds()[2].tag == "ser-2");
    CHECK(st.actors.size() == 3);
    CHECK(st.critics.size() == 3);
    CHECK(st.metrics.size() == 3);
    CHECK(st.metrics[0].tau == 0);
    CHECK(st.metrics[2].tau == 2);
    for (const auto& row : st.metrics) {
      CHECK(row.rr_star >= 0.0);
      CHECK(row.rr_star <= 1.0);
    }
    CHECK(st.metrics[1].v_vanilla.has_value());
    CHECK(st.last_explore.size() == 3);
    CHECK(st.last_vanilla.size() == 3);
  }

  TEST_CASE("runs are deterministic per seed") {
    const auto mc = loop_market();
    Market m(mc);
    const auto fs = FeatureScaling::for_market(mc, 0.1);
    const auto cfg = loop_config(mc);
    const auto nets = safe_nets();
    const auto a = run_sorl(m, nets.actor, nets.critic, fs, cfg);
    const auto b = run_sorl(m, nets.actor, nets.critic, fs, cfg);
    CHECK(a.actors.back().params() == b.actors.back().params());
    CHECK(a.critics.back().params() == b.critics.back().params());
    CHECK(a.data.all() == b.data.all());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
      CHECK(a.metrics[i].v_policy == b.metrics[i].v_policy);
      CHECK(a.metrics[i].v_explore == b.metrics[i].v_explore);
    }
  }

  TEST_CASE("a zero radius makes exploration replay the safe policy") {
    const auto mc = loop_market();
    Market m(mc);
    const auto fs = FeatureScaling::for_market(mc, 0.1);
    auto cfg = loop_config(mc);
    cfg.zone.radius = 0.0;
    cfg.max_iterations = 1;
    const auto nets = safe_nets();
    const auto st = run_sorl(m, nets.actor, nets.critic, fs, cfg);
    CHECK(st.last_explore == st.last_safe);
    CHECK(st.last_vanilla == st.last_safe);
    CHECK(st.metrics[1].gate_passed);
  }

  TEST_CASE("a sweep without steps scores the starting actor for every seed") {
    const auto mc = loop_market();
    Market m(mc);
    const auto fs = FeatureScaling::for_market(mc, 0.1);
    auto cfg = loop_config(mc);
    cfg.boot.steps = 0;
    const auto nets = safe_nets();
    const auto data = collect_boot_data(m, nets.actor, fs, cfg);
    const auto tapes = evaluation_tapes(m, cfg);
    const OfflineInit init{nets.actor, nets.critic};
    const std::uint64_t seeds[] = {1, 2, 3};
    const auto rows = variance_sweep(data, nets.critic, cfg.boot, fs, seeds, tapes, {}, mc, &init);
    REQUIRE(rows.size() == 6);
    const double expect = evaluate(actor_policy(nets.actor, fs), tapes, mc).buy_cnt;
    for (const auto& r : rows) CHECK(r.buy_cnt == expect);
    CHECK(rows.front().method == "vcql");
    CHECK(rows.back().method == "cql-h");
  }

  TEST_CASE("invalid loop configs name the field") {
    auto cfg = loop_config(loop_market());
    cfg.episodes_per_round = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(6), doctest::Contains("sorl.episodes_per_round"), ConfigError);
  }
}
