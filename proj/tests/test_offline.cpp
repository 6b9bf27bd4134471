#include <doctest.h>

#include <cmath>

#include "sorl/offline.hpp"

using namespace sorl;

namespace {

MarketConfig offline_market() {
  MarketConfig c;
  c.T = 8;
  c.B_min = 30.0;
  c.B_max = 60.0;
  c.p_M = 3.0;
  c.A_min = 0.25;
  c.A_max = 10.0;
  return c;
}

std::vector<TransitionRecord> random_records(Rng& rng, int n, const MarketConfig& m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<TransitionRecord> out(static_cast<std::size_t>(n));
  for (auto& r : out) {
    const double B = m.B_min + (m.B_max - m.B_min) * u(rng);
    const double used = B * u(rng);
    const int tl = 1 + static_cast<int>(u(rng) * m.T);
    r.s = {B - used, tl, used};
    r.a = m.A_min + (m.A_max - m.A_min) * u(rng);
    r.behavior_action = m.A_min + (m.A_max - m.A_min) * u(rng);
    r.r = 3.0 * u(rng);
    r.cost = 0.3 * u(rng) * (B - used);
    r.s_next = {r.s.budget_left - r.cost, tl - 1, used + r.cost};
    r.done = tl == 1;
  }
  return out;
}

double linear_q(const Eigen::VectorXd& w, const FeatureScaling& fs, const BidState& s, double a) {
  double f[kStateFeatures];
  fs.write_state(s, f);
  return w(0) * f[0] + w(1) * f[1] + w(2) * f[2] + w(3) * fs.action_feature(a) + w(4);
}

std::vector<double> bid_grid(const MarketConfig& m, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(m.A_min + (m.A_max - m.A_min) * i / (n - 1));
  return g;
}

double mean_q(const Net& critic, std::span<const TransitionRecord> recs, std::span<const double> bids,
              const FeatureScaling& fs) {
  double total = 0.0;
  for (const auto& r : recs) total += q_row(critic, r.s, bids, fs).mean();
  return total / static_cast<double>(recs.size());
}

}  // namespace

TEST_SUITE("offline") {
  TEST_CASE("one transition with two sampled bids matches the hand terms") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Net critic({4, 1}, {Activation::Identity});
    critic.params() << 0.4, -0.3, 0.2, 1.5, 0.05;
    Net ref({4, 1}, {Activation::Identity});
    ref.params() << -0.1, 0.6, 0.0, -0.8, 0.3;
    TransitionRecord r;
    r.s = {40.0, 5, 10.0};
    r.a = 3.0;
    r.behavior_action = 6.0;
    const std::vector<TransitionRecord> batch{r};
    const std::vector<double> samples{2.0, 7.0};
    Eigen::VectorXd y(1);
    y << 0.7;
    VcqlConfig cfg;
    cfg.alpha1 = 0.3;
    cfg.alpha2 = 0.2;
    cfg.beta = 0.5;

    const double q1 = linear_q(critic.params(), fs, r.s, 2.0), q2 = linear_q(critic.params(), fs, r.s, 7.0);
    const double r1 = linear_q(ref.params(), fs, r.s, 2.0), r2 = linear_q(ref.params(), fs, r.s, 7.0);
    const double lse = std::log(std::exp(q1) + std::exp(q2));
    const double p1 = std::exp(q1 - lse), p2 = std::exp(q2 - lse);
    const double rl = std::log(std::exp(r1) + std::exp(r2));
    const double kl = p1 * ((q1 - lse) - (r1 - rl)) + p2 * ((q2 - lse) - (r2 - rl));
    const double qa = linear_q(critic.params(), fs, r.s, 3.0);
    const double qb = linear_q(critic.params(), fs, r.s, 6.0);
    const double td = 0.5 * (qa - 0.7) * (qa - 0.7);

    const auto t = vcql_loss(batch, critic, y, &ref, samples, cfg, fs);
    CHECK(t.conservative == doctest::Approx(lse).epsilon(1e-13));
    CHECK(t.behavior == doctest::Approx(qb).epsilon(1e-13));
    CHECK(t.td == doctest::Approx(td).epsilon(1e-13));
    CHECK(t.kl == doctest::Approx(kl).epsilon(1e-12));
    CHECK(t.total == doctest::Approx(0.3 * lse - 0.2 * qb + td + 0.5 * kl).epsilon(1e-13));
  }

  TEST_CASE("KL vanishes when the critic equals its reference") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(3);
    NetShape shape;
    shape.hidden = {6};
    const Net critic = make_critic(shape, rng);
    const auto batch = random_records(rng, 9, m);
    const auto t = vcql_loss(batch, critic, Eigen::VectorXd::Zero(9), &critic, bid_grid(m, 16), VcqlConfig{}, fs);
    CHECK(std::abs(t.kl) <= 1e-12);
    const auto states = std::vector<BidState>{batch[0].s, batch[1].s};
    CHECK(std::abs(mean_action_kl(critic, critic, states, bid_grid(m, 16), fs)) <= 1e-12);
  }

  TEST_CASE("with all regularizers off the loss is the TD loss") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(4);
    NetShape shape;
    shape.hidden = {5, 4};
    const Net critic = make_critic(shape, rng);
    const auto batch = random_records(rng, 7, m);
    const Eigen::VectorXd y = Eigen::VectorXd::Random(7);
    VcqlConfig cfg;
    cfg.alpha1 = cfg.alpha2 = cfg.beta = 0.0;
    const auto t = vcql_loss(batch, critic, y, nullptr, bid_grid(m, 8), cfg, fs);
    const auto td = td_loss(critic, batch, y, fs);
    CHECK(t.total == doctest::Approx(td.loss).epsilon(1e-14));
    CHECK(gradient_relative_error(t.grad, td.grad) <= 1e-12);
  }

  TEST_CASE("CQL(H) is the same loss with beta zero") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(5);
    NetShape shape;
    shape.hidden = {5};
    const Net critic = make_critic(shape, rng);
    const Net ref = make_critic(shape, rng);
    const auto batch = random_records(rng, 6, m);
    const Eigen::VectorXd y = Eigen::VectorXd::Random(6);
    VcqlConfig cfg;
    cfg.alpha1 = 0.5;
    cfg.alpha2 = 0.3;
    const auto h = cql_h_loss(batch, critic, y, bid_grid(m, 8), cfg, fs);
    cfg.beta = 0.0;
    const auto v = vcql_loss(batch, critic, y, &ref, bid_grid(m, 8), cfg, fs);
    CHECK(h.total == doctest::Approx(v.total).epsilon(1e-14));
    CHECK(gradient_relative_error(h.grad, v.grad) <= 1e-14);
    CHECK(h.kl == 0.0);
  }

  TEST_CASE("V-CQL and CQL(H) gradients match central differences") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    NetShape shape;
    shape.hidden = {5, 4};
    VcqlConfig cfg;
    cfg.alpha1 = 0.7;
    cfg.alpha2 = 0.4;
    cfg.beta = 0.9;
    for (int trial = 0; trial < 20; ++trial) {
      Rng rng(700 + trial);
      Net critic = make_critic(shape, rng);
      critic.params() *= 3.0;
      const Net ref = make_critic(shape, rng);
      const auto batch = random_records(rng, 5, m);
      const Eigen::VectorXd y = Eigen::VectorXd::Random(5);
      std::vector<double> samples(6);
      std::uniform_real_distribution<double> bid(m.A_min, m.A_max);
      for (double& a : samples) a = bid(rng);

      const auto t = vcql_loss(batch, critic, y, &ref, samples, cfg, fs);
      auto f = [&](const Eigen::VectorXd& p) {
        Net c = critic;
        c.params() = p;
        return vcql_loss(batch, c, y, &ref, samples, cfg, fs).total;
      };
      CHECK(gradient_relative_error(t.grad, central_difference(f, critic.params())) <= 1e-4);

      const auto h = cql_h_loss(batch, critic, y, samples, cfg, fs);
      auto fh = [&](const Eigen::VectorXd& p) {
        Net c = critic;
        c.params() = p;
        return cql_h_loss(batch, c, y, samples, cfg, fs).total;
      };
      CHECK(gradient_relative_error(h.grad, central_difference(fh, critic.params())) <= 1e-4);
    }
  }

  TEST_CASE("a positive beta without a reference is rejected") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(1);
    const Net critic = make_critic(NetShape{}, rng);
    const auto batch = random_records(rng, 2, m);
    VcqlConfig cfg;
    cfg.beta = 0.1;
    CHECK_THROWS_AS(vcql_loss(batch, critic, Eigen::VectorXd::Zero(2), nullptr, bid_grid(m, 4), cfg, fs),
                    ContractViolation);
    CHECK_THROWS_AS(vcql_loss(batch, critic, Eigen::VectorXd::Zero(3), &critic, bid_grid(m, 4), cfg, fs),
                    ContractViolation);
  }

  TEST_CASE("dataset rounds keep their tags and order") {
    const auto m = offline_market();
    Rng rng(2);
    TaggedDataset data;
    CHECK(data.empty());
    CHECK(data.add_round("safe", random_records(rng, 4, m)) == 0);
    CHECK(data.add_round("iter-1", random_records(rng, 3, m)) == 1);
    CHECK(data.size() == 7);
    CHECK(data.rounds()[0].tag == "safe");
    const auto all = data.all();
    REQUIRE(all.size() == 7);
    for (int i = 0; i < 4; ++i) CHECK(all[static_cast<std::size_t>(i)].round == 0);
    for (int i = 4; i < 7; ++i) CHECK(all[static_cast<std::size_t>(i)].round == 1);
    CHECK(all[4] == data.rounds()[1].records[0]);
  }

  TEST_CASE("zero steps return the initialization") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(6);
    NetShape shape;
    shape.hidden = {6};
    const OfflineInit init{make_actor(shape, rng), make_critic(shape, rng)};
    TaggedDataset data;
    data.add_round("safe", random_records(rng, 20, m));
    VcqlConfig cfg;
    cfg.shape = shape;
    cfg.steps = 0;
    const auto res = train_offline(data, &init.critic, cfg, fs, 1, &init);
    CHECK(res.actor.params() == init.actor.params());
    CHECK(res.critic.params() == init.critic.params());
    CHECK(res.curve.empty());
    CHECK_THROWS_AS(train_offline(TaggedDataset{}, &init.critic, cfg, fs, 1, &init), std::invalid_argument);
  }

  TEST_CASE("the conservative term lowers Q on sampled bids") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(7);
    NetShape shape;
    shape.hidden = {16};
    TaggedDataset data;
    data.add_round("safe", random_records(rng, 200, m));
    VcqlConfig cfg;
    cfg.shape = shape;
    cfg.steps = 300;
    cfg.batch_size = 32;
    cfg.critic_lr = 1e-3;
    cfg.alpha1 = cfg.alpha2 = cfg.beta = 0.0;
    const auto plain = train_offline(data, nullptr, cfg, fs, 3);
    cfg.alpha1 = 1.0;
    const auto pushed = train_offline(data, nullptr, cfg, fs, 3);
    const auto recs = data.all();
    const auto bids = bid_grid(m, 12);
    CHECK(mean_q(pushed.critic, recs, bids, fs) < mean_q(plain.critic, recs, bids, fs));
    CHECK(pushed.curve.back().conservative < plain.curve.back().conservative);
  }

  TEST_CASE("a large beta keeps the critic's bid softmax near the reference") {
    const auto m = offline_market();
    const auto fs = FeatureScaling::for_market(m, 0.1);
    Rng rng(8);
    NetShape shape;
    shape.hidden = {16};
    const OfflineInit init{make_actor(shape, rng), make_critic(shape, rng)};
    TaggedDataset data;
    data.add_round("safe", random_records(rng, 200, m));
    VcqlConfig cfg;
    cfg.shape = shape;
    cfg.steps = 300;
    cfg.batch_size = 32;
    cfg.critic_lr = 1e-3;
    cfg.alpha1 = 1.0;
    cfg.alpha2 = 0.0;
    cfg.beta = 0.0;
    const auto loose = train_offline(data, &init.critic, cfg, fs, 4, &init);
    cfg.beta = 50.0;
    const auto tight = train_offline(data, &init.critic, cfg, fs, 4, &init);
    std::vector<BidState> states;
    for (const auto& r : data.all()) states.push_back(r.s);
    const auto bids = bid_grid(m, 12);
    const double kl_loose = mean_action_kl(loose.critic, init.critic, states, bids, fs);
    const double kl_tight = mean_action_kl(tight.critic, init.critic, states, bids, fs);
    CHECK(kl_tight < 0.5 * kl_loose);
  }

  TEST_CASE("invalid configs name the field") {
    VcqlConfig cfg;
    cfg.action_samples = 1;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("vcql.action_samples"), ConfigError);
    cfg = VcqlConfig{};
    cfg.beta = -1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("vcql.beta"), ConfigError);
  }
}
