#include <doctest.h>

#include <cmath>

#include "sorl/ddpg.hpp"
#include "sorl/eval.hpp"

using namespace sorl;

namespace {

MarketConfig tiny_market() {
  MarketConfig c;
  c.T = 8;
  c.n_min = 10;
  c.n_max = 20;
  c.B_min = 30.0;
  c.B_max = 60.0;
  c.p_M = 3.0;
  c.A_min = 0.25;
  c.A_max = 10.0;
  c.n_competitors = 20;
  c.stage2_slots = 4;
  return c;
}

FeatureScaling tiny_scaling(const MarketConfig& m) { return FeatureScaling::for_market(m, 0.1); }

std::vector<TransitionRecord> random_batch(Rng& rng, int n, const MarketConfig& m, bool terminal_mix = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TransitionRecord> batch(static_cast<std::size_t>(n));
  for (auto& r : batch) {
    const double B = m.B_min + (m.B_max - m.B_min) * u(rng);
    const double used = B * u(rng);
    const int tl = 1 + static_cast<int>(u(rng) * m.T);
    r.s = {B - used, tl, used};
    r.a = m.A_min + (m.A_max - m.A_min) * u(rng);
    r.r = 3.0 * u(rng);
    r.cost = 0.5 * u(rng) * (B - used);
    r.s_next = {r.s.budget_left - r.cost, tl - 1, used + r.cost};
    r.done = terminal_mix && u(rng) < 0.2;
    r.behavior_action = m.A_min + (m.A_max - m.A_min) * u(rng);
  }
  return batch;
}

}  // namespace

TEST_SUITE("ddpg") {
  TEST_CASE("replay buffer evicts the oldest record first") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
      TransitionRecord r;
      r.t = i;
      buf.push(r);
    }
    CHECK(buf.size() == 3);
    CHECK(buf[0].t == 2);
    CHECK(buf[2].t == 4);
    Rng rng(1);
    const auto s = buf.sample(10, rng);
    CHECK(s.size() == 10);
    for (const auto& r : s) CHECK(r.t >= 2);
  }

  TEST_CASE("terminal zero-reward batch with zero critic has zero target and loss") {
    const auto m = tiny_market();
    const auto fs = tiny_scaling(m);
    Rng rng(3);
    auto batch = random_batch(rng, 6, m);
    for (auto& r : batch) {
      r.r = 0.0;
      r.done = true;
    }
    NetShape shape;
    shape.hidden = {4};
    Rng init(1);
    Net critic = make_critic(shape, init);
    critic.params().setZero();
    const Net actor = make_actor(shape, init);
    const auto y = td_targets(batch, critic, actor, fs, 0.99);
    CHECK(y.isZero(0.0));
    CHECK(td_loss(critic, batch, y, fs).loss == 0.0);
  }

  TEST_CASE("TD target of a single transition matches the hand computation") {
    const auto m = tiny_market();
    const auto fs = tiny_scaling(m);
    Net critic({4, 1}, {Activation::Identity});
    critic.params() << 0.5, -1.0, 0.25, 2.0, 0.1;  // weights then bias
    Net actor({3, 1}, {Activation::Sigmoid});
    actor.params() << 1.0, 0.5, -0.5, 0.2;
    TransitionRecord r;
    r.s = {40.0, 5, 10.0};
    r.a = 3.0;
    r.r = 2.0;
    r.s_next = {37.0, 4, 13.0};
    r.done = false;
    const std::vector<TransitionRecord> batch{r};
    const double x0 = 37.0 / fs.budget_scale, x1 = 4.0 / fs.horizon, x2 = 13.0 / fs.budget_scale;
    const double head = 1.0 / (1.0 + std::exp(-(1.0 * x0 + 0.5 * x1 - 0.5 * x2 + 0.2)));
    const double a_next = fs.A_min + (fs.A_max - fs.A_min) * head;
    const double q_next = 0.5 * x0 - 1.0 * x1 + 0.25 * x2 + 2.0 * fs.action_feature(a_next) + 0.1;
    const double want = 2.0 * fs.reward_scale + 0.9 * q_next;
    const auto y = td_targets(batch, critic, actor, fs, 0.9);
    CHECK(y(0) == doctest::Approx(want).epsilon(1e-14));
    r.done = true;
    const std::vector<TransitionRecord> done_batch{r};
    CHECK(td_targets(done_batch, critic, actor, fs, 0.9)(0) == doctest::Approx(2.0 * fs.reward_scale));
  }

  TEST_CASE("TD and actor gradients match central differences") {
    const auto m = tiny_market();
    const auto fs = tiny_scaling(m);
    NetShape shape;
    shape.hidden = {5, 4};
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(500 + trial);
      const Net critic = make_critic(shape, rng);
      const Net actor = make_actor(shape, rng);
      const auto batch = random_batch(rng, 7, m);
      Eigen::VectorXd y = Eigen::VectorXd::Random(7);
      const auto td = td_loss(critic, batch, y, fs);
      auto f_td = [&](const Eigen::VectorXd& p) {
        Net c = critic;
        c.params() = p;
        return td_loss(c, batch, y, fs).loss;
      };
      CHECK(gradient_relative_error(td.grad, central_difference(f_td, critic.params())) <= 1e-4);

      const auto al = actor_loss(actor, critic, batch, fs);
      auto f_actor = [&](const Eigen::VectorXd& p) {
        Net a = actor;
        a.params() = p;
        return actor_loss(a, critic, batch, fs).loss;
      };
      CHECK(gradient_relative_error(al.grad, central_difference(f_actor, actor.params())) <= 1e-4);
    }
  }

  TEST_CASE("actor output stays inside the bid range") {
    const auto m = tiny_market();
    const auto fs = tiny_scaling(m);
    NetShape shape;
    Rng rng(2);
    Net actor = make_actor(shape, rng);
    actor.params() *= 50.0;
    for (double b : {0.0, 1.0, 30.0, 1e6})
      for (int tl : {0, 1, 8}) {
        const double a = actor_action(actor, {b, tl, 5.0}, fs);
        CHECK(a >= m.A_min);
        CHECK(a <= m.A_max);
      }
  }

  TEST_CASE("zero updates return the initialization; the same seed reproduces training") {
    const auto m = tiny_market();
    Market market(m);
    const auto fs = tiny_scaling(m);
    DdpgConfig cfg;
    cfg.shape.hidden = {8};
    cfg.episodes = 2;
    cfg.updates_per_step = 0;
    cfg.batch_size = 16;
    cfg.buffer_capacity = 64;
    cfg.eval_episodes = 2;
    cfg.seed = 3;
    const auto zero = train_safe_policy(market, cfg, fs);
    Rng init(mix_seed(cfg.seed, 1));
    const auto fresh = ActorCritic::create(cfg.shape, cfg.actor_lr, cfg.critic_lr, init);
    CHECK(zero.actor.params() == fresh.actor.params());
    CHECK(zero.critic.params() == fresh.critic.params());

    cfg.episodes = 6;
    cfg.updates_per_step = 1;
    cfg.exploration_variance = 0.25;
    const auto a = train_safe_policy(market, cfg, fs);
    const auto b = train_safe_policy(market, cfg, fs);
    CHECK(a.actor.params() == b.actor.params());
    CHECK(a.critic.params() == b.critic.params());
    CHECK(a.actor.params() != zero.actor.params());
    CHECK(a.curve.size() == 6);
  }

  TEST_CASE("invalid configs name the field") {
    DdpgConfig cfg;
    cfg.episodes = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ddpg.episodes"), ConfigError);
    cfg = DdpgConfig{};
    cfg.gamma = 1.5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ddpg.gamma"), ConfigError);
  }
}
