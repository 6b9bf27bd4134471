#include "sorl/approx.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace sorl {

const char* activation_name(Activation act) noexcept {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "softplus") return Activation::Softplus;
  throw std::runtime_error("unknown activation '" + name + "'");
}

void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw ContractViolation("adam_step: shape mismatch");
  if (!grad.allFinite()) throw std::runtime_error("adam_step: non-finite gradient");
  const auto& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params.array() -= c.lr * (state.m.array() / corr1) / ((state.v.array() / corr2).sqrt() + c.eps);
}

void soft_update(Net& target, const Net& online, double rate) {
  if (!target.same_architecture(online)) throw ContractViolation("soft_update: architecture mismatch");
  if (rate == 1.0) {
    target.params() = online.params();
    return;
  }
  target.params() = (1.0 - rate) * target.params() + rate * online.params();
}

void save_checkpoint(std::ostream& out, const Net& net, const std::string& tag) {
  out << "#sorl-checkpoint v1\n";
  out << "tag " << tag << '\n';
  out << "widths";
  for (int w : net.widths()) out << ' ' << w;
  out << "\nactivations";
  for (auto a : net.activations()) out << ' ' << activation_name(a);
  out << "\nparams " << net.param_count() << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < net.param_count(); ++i) {
    std::snprintf(buf, sizeof(buf), "%a\n", net.params()(i));
    out << buf;
  }
}

Net load_checkpoint(std::istream& in, std::string* tag) {
  std::string line;
  if (!std::getline(in, line) || line != "#sorl-checkpoint v1")
    throw std::runtime_error("load_checkpoint: bad header");
  std::string key;
  std::string name;
  if (!(in >> key >> name) || key != "tag") throw std::runtime_error("load_checkpoint: missing tag");
  if (tag) *tag = name;
  std::getline(in, line);
  std::getline(in, line);
  std::istringstream ws(line);
  ws >> key;
  if (key != "widths") throw std::runtime_error("load_checkpoint: missing widths");
  std::vector<int> widths;
  for (int w; ws >> w;) widths.push_back(w);
  std::getline(in, line);
  std::istringstream as(line);
  as >> key;
  if (key != "activations") throw std::runtime_error("load_checkpoint: missing activations");
  std::vector<Activation> acts;
  for (std::string a; as >> a;) acts.push_back(parse_activation(a));
  Net net(widths, acts);
  long count = 0;
  if (!(in >> key >> count) || key != "params" || count != net.param_count())
    throw std::runtime_error("load_checkpoint: parameter count does not match architecture");
  for (long i = 0; i < count; ++i) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("load_checkpoint: truncated parameter list");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw std::runtime_error("load_checkpoint: bad parameter '" + tok + "'");
    net.params()(i) = v;
  }
  return net;
}

void save_checkpoint(const std::string& path, const Net& net, const std::string& tag) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(out, net, tag);
}

Net load_checkpoint(const std::string& path, std::string* tag) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return load_checkpoint(in, tag);
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

double gradient_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
  const double scale = std::max(analytic.lpNorm<Eigen::Infinity>(), numeric.lpNorm<Eigen::Infinity>());
  if (scale == 0.0) return 0.0;
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace sorl
