#include "sorl/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sorl/eval.hpp"

namespace sorl {

void DdpgConfig::validate() const {
  auto need = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("ddpg.") + field + ": " + why);
  };
  need(actor_lr > 0.0, "actor_lr", "must be > 0");
  need(critic_lr > 0.0, "critic_lr", "must be > 0");
  need(tau > 0.0 && tau <= 1.0, "tau", "must be in (0, 1]");
  need(buffer_capacity >= 1, "buffer_capacity", "must be >= 1");
  need(batch_size >= 1, "batch_size", "must be >= 1");
  need(gamma >= 0.0 && gamma <= 1.0, "gamma", "must be in [0, 1]");
  need(exploration_variance >= 0.0, "exploration_variance", "must be >= 0");
  need(episodes >= 1, "episodes", "must be >= 1");
  need(updates_per_step >= 0, "updates_per_step", "must be >= 0");
  need(eval_episodes >= 1, "eval_episodes", "must be >= 1");
  need(select_every >= 0, "select_every", "must be >= 0");
  need(select_episodes >= 1, "select_episodes", "must be >= 1");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractViolation("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(const TransitionRecord& rec) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(rec);
}

std::vector<TransitionRecord> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw ContractViolation("ReplayBuffer::sample: empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<TransitionRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

namespace {

std::vector<BidState> states_of(std::span<const TransitionRecord> batch, bool next) {
  std::vector<BidState> s;
  s.reserve(batch.size());
  for (const auto& r : batch) s.push_back(next ? r.s_next : r.s);
  return s;
}

}  // namespace

Eigen::VectorXd td_targets(std::span<const TransitionRecord> batch, const Net& critic_target,
                           const Net& actor_target, const FeatureScaling& fs, double gamma) {
  const auto next = states_of(batch, true);
  const Eigen::VectorXd a_next = actor_actions(actor_target, next, fs);
  std::vector<double> acts(a_next.data(), a_next.data() + a_next.size());
  const Eigen::VectorXd q_next = q_values(critic_target, next, acts, fs);
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    y(k) = batch[i].r * fs.reward_scale + (batch[i].done ? 0.0 : gamma * q_next(k));
  }
  return y;
}

LossGrad td_loss(const Net& critic, std::span<const TransitionRecord> batch, const Eigen::VectorXd& targets,
                 const FeatureScaling& fs) {
  if (batch.empty()) throw ContractViolation("td_loss: empty batch");
  const auto s = states_of(batch, false);
  std::vector<double> a;
  for (const auto& r : batch) a.push_back(r.a);
  Net::Tape tape;
  const Eigen::MatrixXd q = critic.forward(critic_inputs(s, a, fs), tape);
  const double n = static_cast<double>(batch.size());
  const Eigen::RowVectorXd err = q.row(0) - targets.transpose();
  LossGrad out;
  out.loss = 0.5 * err.squaredNorm() / n;
  if (!std::isfinite(out.loss)) throw std::runtime_error("td_loss: non-finite loss");
  out.grad = Eigen::VectorXd::Zero(critic.param_count());
  critic.backward(tape, err / n, &out.grad);
  return out;
}

LossGrad actor_loss(const Net& actor, const Net& critic, std::span<const TransitionRecord> batch,
                    const FeatureScaling& fs) {
  if (batch.empty()) throw ContractViolation("actor_loss: empty batch");
  const auto s = states_of(batch, false);
  Net::Tape actor_tape;
  const Eigen::MatrixXd head = actor.forward(state_inputs(s, fs), actor_tape);
  std::vector<double> a(static_cast<std::size_t>(head.cols()));
  for (Eigen::Index i = 0; i < head.cols(); ++i) a[static_cast<std::size_t>(i)] = head_to_action(head(0, i), fs);
  Net::Tape critic_tape;
  const Eigen::MatrixXd q = critic.forward(critic_inputs(s, a, fs), critic_tape);
  const double n = static_cast<double>(batch.size());
  LossGrad out;
  out.loss = -q.sum() / n;
  if (!std::isfinite(out.loss)) throw std::runtime_error("actor_loss: non-finite loss");
  const Eigen::MatrixXd dq = Eigen::MatrixXd::Constant(1, q.cols(), -1.0 / n);
  const Eigen::MatrixXd dx = critic.backward(critic_tape, dq, nullptr);
  const double chain = (fs.A_max - fs.A_min) / fs.action_span;
  const Eigen::MatrixXd dhead = dx.row(kStateFeatures) * chain;
  out.grad = Eigen::VectorXd::Zero(actor.param_count());
  actor.backward(actor_tape, dhead, &out.grad);
  return out;
}

ActorCritic ActorCritic::create(const NetShape& shape, double actor_lr, double critic_lr, Rng& rng) {
  Net actor = make_actor(shape, rng);
  Net critic = make_critic(shape, rng);
  return from(std::move(actor), std::move(critic), actor_lr, critic_lr);
}

ActorCritic ActorCritic::from(Net actor, Net critic, double actor_lr, double critic_lr) {
  ActorCritic ac;
  ac.actor_opt = AdamState(actor.param_count(), AdamConfig{actor_lr});
  ac.critic_opt = AdamState(critic.param_count(), AdamConfig{critic_lr});
  ac.actor_target = actor;
  ac.critic_target = critic;
  ac.actor = std::move(actor);
  ac.critic = std::move(critic);
  return ac;
}

UpdateLosses ddpg_update(std::span<const TransitionRecord> batch, ActorCritic& nets, const DdpgConfig& config,
                         const FeatureScaling& fs) {
  if (batch.empty()) throw ContractViolation("ddpg_update: empty batch");
  UpdateLosses out;
  const Eigen::VectorXd y = td_targets(batch, nets.critic_target, nets.actor_target, fs, config.gamma);
  const auto c = td_loss(nets.critic, batch, y, fs);
  adam_step(nets.critic_opt, nets.critic.params(), c.grad);
  const auto a = actor_loss(nets.actor, nets.critic, batch, fs);
  adam_step(nets.actor_opt, nets.actor.params(), a.grad);
  soft_update(nets.critic_target, nets.critic, config.tau);
  soft_update(nets.actor_target, nets.actor, config.tau);
  out.critic = c.loss;
  out.actor = a.loss;
  return out;
}

SafePolicyResult train_safe_policy(const Market& market, const DdpgConfig& config, const FeatureScaling& fs) {
  config.validate();
  const auto& mc = market.config();
  Rng init_rng(mix_seed(config.seed, 1));
  auto nets = ActorCritic::create(config.shape, config.actor_lr, config.critic_lr, init_rng);
  ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity));
  Rng noise_rng(mix_seed(config.seed, 2));
  Rng sample_rng(mix_seed(config.seed, 3));
  const double noise_sd = std::sqrt(config.exploration_variance);

  SafePolicyResult res;
  res.scaling = fs;
  std::vector<EpisodeTape> validation;
  if (config.select_every > 0) validation = make_tapes(market, mix_seed(config.seed, 5), config.select_episodes);
  Net best_actor = nets.actor, best_critic = nets.critic;
  res.selected_buy_cnt = -1.0;
  auto consider = [&](int done) {
    const double v = evaluate(actor_policy(nets.actor, fs), validation, mc).buy_cnt;
    if (v > res.selected_buy_cnt) {
      res.selected_buy_cnt = v;
      res.selected_episode = done;
      best_actor = nets.actor;
      best_critic = nets.critic;
    }
  };
  for (int ep = 0; ep < config.episodes; ++ep) {
    const auto tape = market.draw_episode(mix_seed(config.seed, 1000 + static_cast<std::uint64_t>(ep)));
    BidState s{tape.budget, mc.T, 0.0};
    TrainingCurvePoint pt;
    pt.episode = ep;
    int updates = 0;
    for (int t = 0; t < mc.T; ++t) {
      double a = actor_action(nets.actor, s, fs);
      if (noise_sd > 0.0) a += std::normal_distribution<double>(0.0, noise_sd)(noise_rng);
      a = std::clamp(a, mc.A_min, mc.A_max);
      const auto out = auction_step(s, a, tape.steps[static_cast<std::size_t>(t)], mc);
      TransitionRecord rec{t, s, a, out.reward, out.cost, out.next_state, out.terminated, 0, a};
      buffer.push(rec);
      pt.buy_cnt += out.reward;
      pt.con_bdg += out.cost;
      if (buffer.size() >= std::min<std::size_t>(config.batch_size, buffer.capacity())) {
        for (int u = 0; u < config.updates_per_step; ++u) {
          const auto batch = buffer.sample(static_cast<std::size_t>(config.batch_size), sample_rng);
          const auto l = ddpg_update(batch, nets, config, fs);
          if (!nets.actor.params().allFinite() || !nets.critic.params().allFinite())
            throw std::runtime_error("train_safe_policy: parameters diverged at episode " + std::to_string(ep));
          pt.critic_loss += l.critic;
          pt.actor_loss += l.actor;
          ++updates;
        }
      }
      s = out.next_state;
      if (out.terminated) break;
    }
    if (updates > 0) {
      pt.critic_loss /= updates;
      pt.actor_loss /= updates;
    }
    res.curve.push_back(pt);
    for (int snap : config.snapshot_episodes)
      if (snap == ep + 1) res.critic_snapshots.emplace_back(snap, nets.critic);
    if (config.select_every > 0 && ((ep + 1) % config.select_every == 0 || ep + 1 == config.episodes)) consider(ep + 1);
  }
  if (config.select_every > 0) {
    res.actor = std::move(best_actor);
    res.critic = std::move(best_critic);
  } else {
    res.actor = nets.actor;
    res.critic = nets.critic;
    res.selected_episode = config.episodes;
  }

  // quality gate against constant bids on held-out episodes
  const auto tapes = make_tapes(market, mix_seed(config.seed, 4), config.eval_episodes);
  res.eval_buy_cnt = evaluate(actor_policy(res.actor, fs), tapes, mc).buy_cnt;
  res.best_gate_buy_cnt = -1.0;
  for (double bid : config.gate_bids) {
    const double v = evaluate(constant_policy(std::clamp(bid, mc.A_min, mc.A_max)), tapes, mc).buy_cnt;
    if (v > res.best_gate_buy_cnt) {
      res.best_gate_buy_cnt = v;
      res.best_gate_bid = bid;
    }
  }
  res.gate_passed = config.gate_bids.empty() || res.eval_buy_cnt > res.best_gate_buy_cnt;
  return res;
}

void write_training_curve(const std::string& path, std::span<const TrainingCurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "episode,buy_cnt,con_bdg,critic_loss,actor_loss\n";
  for (const auto& p : curve)
    out << p.episode << ',' << p.buy_cnt << ',' << p.con_bdg << ',' << p.critic_loss << ',' << p.actor_loss << '\n';
}

}  // namespace sorl
