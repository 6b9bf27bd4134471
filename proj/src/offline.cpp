#include "sorl/offline.hpp"

#include <cmath>
#include <fstream>

namespace sorl {

void VcqlConfig::validate() const {
  auto need = [](bool ok, const char* field, const char* why) {
    if (!ok) throw ConfigError(std::string("vcql.") + field + ": " + why);
  };
  need(alpha1 >= 0.0, "alpha1", "must be >= 0");
  need(alpha2 >= 0.0, "alpha2", "must be >= 0");
  need(beta >= 0.0, "beta", "must be >= 0");
  need(gamma >= 0.0 && gamma <= 1.0, "gamma", "must be in [0, 1]");
  need(actor_lr > 0.0, "actor_lr", "must be > 0");
  need(critic_lr > 0.0, "critic_lr", "must be > 0");
  need(tau > 0.0 && tau <= 1.0, "tau", "must be in (0, 1]");
  need(batch_size >= 1, "batch_size", "must be >= 1");
  need(action_samples >= 2, "action_samples", "must be >= 2");
  need(steps >= 0, "steps", "must be >= 0");
  need(log_every >= 1, "log_every", "must be >= 1");
}

int TaggedDataset::add_round(std::string tag, std::vector<TransitionRecord> records) {
  const int idx = static_cast<int>(rounds_.size());
  for (auto& r : records) r.round = idx;
  rounds_.push_back({std::move(tag), std::move(records)});
  return idx;
}

std::size_t TaggedDataset::size() const noexcept {
  std::size_t n = 0;
  for (const auto& r : rounds_) n += r.records.size();
  return n;
}

std::vector<TransitionRecord> TaggedDataset::all() const {
  std::vector<TransitionRecord> out;
  out.reserve(size());
  for (const auto& r : rounds_) out.insert(out.end(), r.records.begin(), r.records.end());
  return out;
}

namespace {

/// Row-wise log-softmax of a K x n block (one column per state).
Eigen::MatrixXd log_softmax_cols(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double top = x.col(j).maxCoeff();
    const double lse = top + std::log((x.col(j).array() - top).exp().sum());
    out.col(j) = x.col(j).array() - lse;
  }
  return out;
}

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw std::runtime_error(std::string("vcql_loss: non-finite ") + term + " term");
}

}  // namespace

VcqlTerms vcql_loss(std::span<const TransitionRecord> batch, const Net& critic, const Eigen::VectorXd& targets,
                    const Net* reference, std::span<const double> sampled_actions, const VcqlConfig& config,
                    const FeatureScaling& fs) {
  if (batch.empty()) throw ContractViolation("vcql_loss: empty batch");
  if (sampled_actions.size() < 1) throw ContractViolation("vcql_loss: need sampled actions");
  if (targets.size() != static_cast<Eigen::Index>(batch.size())) throw ContractViolation("vcql_loss: target length");
  if (config.beta > 0.0 && reference == nullptr) throw ContractViolation("vcql_loss: beta > 0 needs a reference critic");

  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto K = static_cast<Eigen::Index>(sampled_actions.size());
  Eigen::MatrixXd x(kStateFeatures + 1, 2 * n + n * K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = batch[static_cast<std::size_t>(i)];
    double feat[kStateFeatures];
    fs.write_state(r.s, feat);
    auto put = [&](Eigen::Index c, double a) {
      for (int k = 0; k < kStateFeatures; ++k) x(k, c) = feat[k];
      x(kStateFeatures, c) = fs.action_feature(a);
    };
    put(i, r.a);
    put(n + i, r.behavior_action);
    for (Eigen::Index k = 0; k < K; ++k) put(2 * n + i * K + k, sampled_actions[static_cast<std::size_t>(k)]);
  }

  Net::Tape tape;
  const Eigen::RowVectorXd q = critic.forward(x, tape).row(0);
  const Eigen::Map<const Eigen::MatrixXd> qs(q.data() + 2 * n, K, n);
  const Eigen::MatrixXd logp = log_softmax_cols(qs);
  const Eigen::MatrixXd p = logp.array().exp();

  VcqlTerms out;
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::RowVectorXd dq(q.size());

  const Eigen::RowVectorXd err = q.head(n) - targets.transpose();
  out.td = 0.5 * err.squaredNorm() * inv_n;
  dq.head(n) = err * inv_n;

  out.behavior = q.segment(n, n).sum() * inv_n;
  dq.segment(n, n).setConstant(-config.alpha2 * inv_n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = qs.col(i).maxCoeff();
    out.conservative += top + std::log((qs.col(i).array() - top).exp().sum());
  }
  out.conservative *= inv_n;
  Eigen::MatrixXd dsample = config.alpha1 * p;

  if (reference != nullptr) {
    const Eigen::RowVectorXd qr = reference->forward(x.rightCols(n * K)).row(0);
    const Eigen::Map<const Eigen::MatrixXd> qref(qr.data(), K, n);
    const Eigen::MatrixXd logq = log_softmax_cols(qref);
    const Eigen::MatrixXd diff = logp - logq;
    const Eigen::RowVectorXd kl_i = (p.array() * diff.array()).colwise().sum();
    out.kl = kl_i.sum() * inv_n;
    if (config.beta > 0.0) {
      Eigen::MatrixXd centered = diff;
      centered.rowwise() -= kl_i;
      dsample.array() += config.beta * p.array() * centered.array();
    }
  }
  dsample *= inv_n;
  dq.tail(n * K) = Eigen::Map<const Eigen::RowVectorXd>(dsample.data(), n * K);

  check_finite(out.td, "td");
  check_finite(out.behavior, "behavior");
  check_finite(out.conservative, "conservative");
  check_finite(out.kl, "kl");
  out.total = config.alpha1 * out.conservative - config.alpha2 * out.behavior + out.td +
              (reference != nullptr ? config.beta * out.kl : 0.0);
  out.grad = Eigen::VectorXd::Zero(critic.param_count());
  critic.backward(tape, dq, &out.grad);
  return out;
}

VcqlTerms cql_h_loss(std::span<const TransitionRecord> batch, const Net& critic, const Eigen::VectorXd& targets,
                     std::span<const double> sampled_actions, const VcqlConfig& config, const FeatureScaling& fs) {
  VcqlConfig c = config;
  c.beta = 0.0;
  return vcql_loss(batch, critic, targets, nullptr, sampled_actions, c, fs);
}

OfflineResult train_offline(const TaggedDataset& data, const Net* reference, const VcqlConfig& config,
                            const FeatureScaling& fs, std::uint64_t seed, const OfflineInit* init) {
  config.validate();
  const auto records = data.all();
  if (records.empty()) throw std::invalid_argument("train_offline: empty dataset");
  const Net* ref = config.beta > 0.0 ? reference : nullptr;
  if (config.beta > 0.0 && ref == nullptr) throw ContractViolation("train_offline: beta > 0 needs a reference critic");

  Rng rng(mix_seed(seed, 11));
  ActorCritic nets;
  if (init != nullptr) {
    nets = ActorCritic::from(init->actor, init->critic, config.actor_lr, config.critic_lr);
  } else {
    nets = ActorCritic::create(config.shape, config.actor_lr, config.critic_lr, rng);
  }
  if (ref != nullptr && !ref->same_architecture(nets.critic))
    throw ContractViolation("train_offline: reference critic architecture differs");

  std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
  std::uniform_real_distribution<double> bid(fs.A_min, fs.A_max);
  std::vector<TransitionRecord> batch(static_cast<std::size_t>(config.batch_size));
  std::vector<double> sampled(static_cast<std::size_t>(config.action_samples));

  OfflineResult res;
  OfflineCurvePoint acc;
  int in_window = 0;
  for (int step = 0; step < config.steps; ++step) {
    for (auto& b : batch) b = records[pick(rng)];
    for (auto& a : sampled) a = bid(rng);
    const Eigen::VectorXd y = td_targets(batch, nets.critic_target, nets.actor_target, fs, config.gamma);
    const auto terms = vcql_loss(batch, nets.critic, y, ref, sampled, config, fs);
    adam_step(nets.critic_opt, nets.critic.params(), terms.grad);
    const auto al = actor_loss(nets.actor, nets.critic, batch, fs);
    adam_step(nets.actor_opt, nets.actor.params(), al.grad);
    soft_update(nets.critic_target, nets.critic, config.tau);
    soft_update(nets.actor_target, nets.actor, config.tau);
    if (!nets.critic.params().allFinite() || !nets.actor.params().allFinite())
      throw std::runtime_error("train_offline: parameters diverged at step " + std::to_string(step));

    acc.conservative += terms.conservative;
    acc.behavior += terms.behavior;
    acc.td += terms.td;
    acc.kl += terms.kl;
    acc.total += terms.total;
    acc.actor += al.loss;
    if (++in_window == config.log_every || step + 1 == config.steps) {
      const double w = in_window;
      res.curve.push_back({step + 1, acc.conservative / w, acc.behavior / w, acc.td / w, acc.kl / w, acc.total / w,
                           acc.actor / w});
      acc = {};
      in_window = 0;
    }
  }
  res.actor = std::move(nets.actor);
  res.critic = std::move(nets.critic);
  return res;
}

double mean_action_kl(const Net& critic, const Net& reference, std::span<const BidState> states,
                      std::span<const double> actions, const FeatureScaling& fs) {
  if (states.empty() || actions.empty()) throw ContractViolation("mean_action_kl: empty input");
  double total = 0.0;
  for (const auto& s : states) {
    const Eigen::VectorXd q = q_row(critic, s, actions, fs);
    const Eigen::VectorXd r = q_row(reference, s, actions, fs);
    const Eigen::MatrixXd lp = log_softmax_cols(q);
    const Eigen::MatrixXd lq = log_softmax_cols(r);
    total += (lp.array().exp() * (lp - lq).array()).sum();
  }
  return total / static_cast<double>(states.size());
}

void write_offline_curve(const std::string& path, std::span<const OfflineCurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,conservative,behavior,td,kl,total,actor\n";
  for (const auto& p : curve)
    out << p.step << ',' << p.conservative << ',' << p.behavior << ',' << p.td << ',' << p.kl << ',' << p.total << ','
        << p.actor << '\n';
}

}  // namespace sorl
