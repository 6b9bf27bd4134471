#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sorl/ddpg.hpp"
#include "sorl/eval.hpp"

using namespace sorl;

namespace {

MarketConfig eval_market() {
  MarketConfig c;
  c.T = 6;
  c.n_min = 8;
  c.n_max = 16;
  c.B_min = 10.0;
  c.B_max = 20.0;
  c.p_M = 3.0;
  c.A_min = 0.25;
  c.A_max = 10.0;
  c.n_competitors = 20;
  c.stage2_slots = 4;
  return c;
}

std::vector<VasLogEntry> random_entries(std::mt19937_64& rng, int n) {
  std::vector<VasLogEntry> out;
  for (int j = 0; j < n; ++j) {
    const double v = oracle::dyadic(rng, 0.0625, 1.0);
    const double p = oracle::dyadic(rng, 0.0625, 3.0);
    out.push_back({0, v, p, v, p});
  }
  return out;
}

std::vector<oracle::Item> items_of(const std::vector<VasLogEntry>& e) {
  std::vector<oracle::Item> items;
  for (const auto& x : e) items.push_back({x.v, x.p});
  return items;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("knapsack relaxation matches the LP vertex enumeration") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const auto entries = random_entries(rng, 1 + trial % 10);
      const double budget = oracle::dyadic(rng, 0.0, 12.0);
      const double got = knapsack_relaxation(entries, budget);
      const auto items = items_of(entries);
      CHECK(got == doctest::Approx(oracle::lp_knapsack(items, budget)).epsilon(1e-12));
      CHECK(got >= oracle::integer_knapsack(items, budget) - 1e-12);
    }
  }

  TEST_CASE("knapsack hand cases") {
    const std::vector<VasLogEntry> e{{0, 1.0, 1.0, 1.0, 1.0}, {0, 1.0, 2.0, 1.0, 2.0}, {0, 3.0, 1.0, 3.0, 1.0}};
    CHECK(knapsack_relaxation(e, 0.0) == 0.0);
    CHECK(knapsack_relaxation(e, 0.5) == doctest::Approx(1.5));
    CHECK(knapsack_relaxation(e, 3.0) == doctest::Approx(4.5));
    CHECK(knapsack_relaxation(e, 100.0) == doctest::Approx(5.0));
  }

  TEST_CASE("R over R* hand cases") {
    const MarketConfig c = eval_market();
    VasDataset vas;
    vas.T = 1;
    vas.budget = 10.0;
    vas.steps = {{{0, 1.0, 1.0, 1.0, 1.0}, {0, 1.0, 2.0, 1.0, 2.0}}};
    // a bid of 10 wins both within budget and R* = 2
    CHECK(ope_rr_star(constant_policy(10.0), vas, 10.0, c) == doctest::Approx(1.0));
    // a bid of 1.5 wins only the first impression
    CHECK(ope_rr_star(constant_policy(1.5), vas, 10.0, c) == doctest::Approx(0.5));
    // budget 2: R* = 1 + 0.5, a max bid wins the first then cannot afford the second
    CHECK(ope_rr_star(constant_policy(10.0), vas, 2.0, c) == doctest::Approx(1.0 / 1.5));
    CHECK_THROWS_AS(ope_rr_star(constant_policy(10.0), vas, 0.0, c), std::domain_error);
    VasDataset empty;
    empty.T = 1;
    empty.steps.resize(1);
    CHECK_THROWS_AS(ope_rr_star(constant_policy(10.0), empty, 10.0, c), ContractViolation);
  }

  TEST_CASE("R over R* stays in the unit interval on generated logs") {
    const MarketConfig c = eval_market();
    Market m(c);
    const auto tapes = make_tapes(m, 5, 10);
    const auto vas = build_vas_set(constant_policy(2.0), tapes, c);
    for (double bid : {0.25, 1.0, 2.0, 4.0, 10.0}) {
      for (const auto& d : vas) {
        if (knapsack_relaxation(d, d.budget) <= 0.0) continue;
        const double rr = ope_rr_star(constant_policy(bid), d, d.budget, c);
        CHECK(rr >= 0.0);
        CHECK(rr <= 1.0);
      }
    }
  }

  TEST_CASE("summary identities") {
    std::vector<EpisodeMetrics> eps(3);
    eps[0].budget = 10.0;
    eps[0].buy_cnt = 4.0;
    eps[0].con_bdg = 5.0;
    eps[0].won_count = 2;
    eps[1].budget = 10.0;
    eps[1].buy_cnt = 6.0;
    eps[1].con_bdg = 10.0;
    eps[1].won_count = 4;
    eps[2].budget = 20.0;
    eps[2].buy_cnt = 2.0;
    eps[2].con_bdg = 0.0;
    eps[2].won_count = 0;
    const auto r = summarize(eps);
    CHECK(r.episodes == 3);
    CHECK(r.buy_cnt == doctest::Approx(4.0));
    CHECK(r.con_bdg == doctest::Approx(5.0));
    REQUIRE(r.roi.has_value());
    CHECK(*r.roi == doctest::Approx(0.8));
    REQUIRE(r.cpa.has_value());
    CHECK(*r.cpa == doctest::Approx(2.5));
    CHECK(r.budget_used == doctest::Approx(0.5));
    CHECK(r.buy_cnt_se == doctest::Approx(std::sqrt(4.0 / 3.0)));

    std::vector<EpisodeMetrics> idle(2);
    const auto z = summarize(idle);
    CHECK_FALSE(z.roi.has_value());
    CHECK_FALSE(z.cpa.has_value());
  }

  TEST_CASE("ranks and Spearman correlation") {
    const std::vector<double> x{3.0, 1.0, 2.0, 2.0};
    CHECK(descending_ranks(x) == std::vector<double>{1.0, 4.0, 2.5, 2.5});
    const std::vector<double> one{1.0};
    CHECK_FALSE(spearman(one, one).has_value());
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{8.0, 6.0, 4.0, 2.0};
    CHECK(*spearman(a, a) == doctest::Approx(1.0));
    CHECK(*spearman(a, b) == doctest::Approx(-1.0));
    const std::vector<double> flat{1.0, 1.0, 1.0, 1.0};
    CHECK_FALSE(spearman(a, flat).has_value());
    // 1 - 6 sum d^2 / (n (n^2 - 1)) for untied ranks
    const std::vector<double> c{1.0, 3.0, 2.0, 4.0};
    CHECK(*spearman(a, c) == doctest::Approx(1.0 - 6.0 * 2.0 / (4.0 * 15.0)));
  }

  TEST_CASE("a policy compared with itself has zero deltas") {
    const MarketConfig c = eval_market();
    Market m(c);
    const auto tapes = make_tapes(m, 2, 6);
    const auto d = ab_compare(constant_policy(2.0), constant_policy(2.0), tapes, c);
    REQUIRE(d.size() == 4);
    for (const auto& row : d) {
      REQUIRE(row.delta_pct.has_value());
      CHECK(*row.delta_pct == 0.0);
    }
    CHECK(d[0].se_pct == 0.0);
    const auto up = ab_compare(constant_policy(6.0), constant_policy(2.0), tapes, c);
    REQUIRE(up[1].delta_pct.has_value());
    CHECK(*up[1].delta_pct > 0.0);
    // a bidder that never wins leaves the relative deltas undefined
    const auto idle = ab_compare(constant_policy(6.0), constant_policy(c.A_min), tapes, c);
    CHECK_FALSE(idle[0].delta_pct.has_value());
  }

  TEST_CASE("same tapes and seed give identical rollouts") {
    const MarketConfig c = eval_market();
    Market m(c);
    const auto tapes = make_tapes(m, 9, 4);
    Policy noisy = [](const BidState&, Rng& r) { return std::uniform_real_distribution<double>(0.5, 5.0)(r); };
    const auto a = rollout_metrics(noisy, tapes, c, 3);
    const auto b = rollout_metrics(noisy, tapes, c, 3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].buy_cnt == b[i].buy_cnt);
    const auto direct = evaluate(noisy, m, 9, 4, 3);
    CHECK(direct.buy_cnt == summarize(a).buy_cnt);
  }

  TEST_CASE("a zero radius explores nothing and passes every bound") {
    const MarketConfig c = eval_market();
    Market m(c);
    const auto fs = FeatureScaling::for_market(c, 0.1);
    Rng rng(1);
    const Net critic = make_critic(NetShape{}, rng);
    VerifyConfig cfg;
    cfg.episodes = 4;
    cfg.grid = {{0.0, 0, 3}, {0.0, 2, 2}};
    cfg.ser.candidates = 16;
    cfg.estimation.episodes = 1;
    cfg.estimation.states_per_episode = 2;
    cfg.estimation.bid_grid = 20;
    const auto rep = verify_bounds(m, constant_policy(2.0), critic, fs, cfg);
    REQUIRE(rep.rows.size() == 2);
    for (const auto& row : rep.rows) {
      CHECK(row.gap == 0.0);
      CHECK(row.passed);
    }
    CHECK(rep.constants.L_r == doctest::Approx((rep.constants.k1 + rep.constants.k2) * c.v_M));
  }

  TEST_CASE("IBOO ranks agree for monotone constant bidders") {
    const MarketConfig c = eval_market();
    Market m(c);
    const auto tapes = make_tapes(m, 12, 6);
    const auto vas = build_vas_set(constant_policy(3.0), tapes, c);
    std::vector<NamedPolicy> pols{{"low", constant_policy(2.0)}, {"high", constant_policy(6.0)}};
    const auto rep = iboo_report(pols, vas, tapes, c);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].vas_rr < rep.rows[1].vas_rr);
    CHECK(rep.rows[0].sras_buy_cnt < rep.rows[1].sras_buy_cnt);
    CHECK(rep.inversions == 0);
    REQUIRE(rep.correlation.has_value());
    CHECK(*rep.correlation == doctest::Approx(1.0));
  }
}
