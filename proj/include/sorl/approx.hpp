#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sorl/market.hpp"

namespace sorl {

enum class Activation { Identity, Tanh, Sigmoid, Softplus };

const char* activation_name(Activation act) noexcept;
Activation parse_activation(const std::string& name);

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Elementwise activation and its derivative expressed through the
/// pre-activation `z` and post-activation `y`.
template <typename Scalar>
void apply_activation(Activation act, const MatrixX<Scalar>& z, MatrixX<Scalar>& y) {
  switch (act) {
    case Activation::Identity: y = z; break;
    case Activation::Tanh: y = Scalar(1) - Scalar(2) / ((Scalar(2) * z.array()).exp() + Scalar(1)); break;
    case Activation::Sigmoid: y = (Scalar(1) + (-z.array()).exp()).inverse(); break;
    case Activation::Softplus:
      // log(1 + e^z) without overflow for large z
      y = z.unaryExpr([](Scalar v) { return v > Scalar(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); });
      break;
  }
}

template <typename Scalar>
void activation_derivative(Activation act, const MatrixX<Scalar>& z, const MatrixX<Scalar>& y,
                           MatrixX<Scalar>& d) {
  switch (act) {
    case Activation::Identity: d.setOnes(z.rows(), z.cols()); break;
    case Activation::Tanh: d = Scalar(1) - y.array().square(); break;
    case Activation::Sigmoid: d = y.array() * (Scalar(1) - y.array()); break;
    case Activation::Softplus: d = (Scalar(1) + (-z.array()).exp()).inverse(); break;
  }
}

/// Fully connected network with a flat parameter vector. Inputs are laid out
/// one sample per column. Layer l stores its weight matrix (out x in,
/// column-major) followed by its bias.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  /// Intermediate values kept by a taped forward pass.
  struct Tape {
    std::vector<Matrix> pre;   // z_l
    std::vector<Matrix> post;  // y_l, post[0] is the input
  };

  Mlp() = default;
  Mlp(std::vector<int> widths, std::vector<Activation> activations)
      : widths_(std::move(widths)), activations_(std::move(activations)) {
    if (widths_.size() < 2) throw ContractViolation("Mlp: need at least input and output widths");
    if (activations_.size() != widths_.size() - 1)
      throw ContractViolation("Mlp: one activation per layer required");
    for (int w : widths_)
      if (w < 1) throw ContractViolation("Mlp: layer widths must be positive");
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
      offsets_.push_back(count);
      count += static_cast<Eigen::Index>(widths_[l] + 1) * widths_[l + 1];
    }
    params_ = Vector::Zero(count);
  }

  int input_dim() const noexcept { return widths_.front(); }
  int output_dim() const noexcept { return widths_.back(); }
  int layer_count() const noexcept { return static_cast<int>(activations_.size()); }
  Eigen::Index param_count() const noexcept { return params_.size(); }
  const std::vector<int>& widths() const noexcept { return widths_; }
  const std::vector<Activation>& activations() const noexcept { return activations_; }

  Vector& params() noexcept { return params_; }
  const Vector& params() const noexcept { return params_; }

  bool same_architecture(const Mlp& other) const noexcept {
    return widths_ == other.widths_ && activations_ == other.activations_;
  }

  /// Uniform fan-in initialization U(-1/sqrt(in), 1/sqrt(in)).
  void init(Rng& rng) {
    for (int l = 0; l < layer_count(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      auto w = weight(l);
      auto b = bias(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(u(rng));
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = static_cast<Scalar>(u(rng));
    }
  }

  Eigen::Map<Matrix> weight(int l) {
    return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
  }
  Eigen::Map<const Matrix> weight(int l) const {
    return {params_.data() + offsets_[l], widths_[l + 1], widths_[l]};
  }
  Eigen::Map<Vector> bias(int l) {
    return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1], widths_[l + 1]};
  }
  Eigen::Map<const Vector> bias(int l) const {
    return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1], widths_[l + 1]};
  }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix y = x;
    Matrix z;
    for (int l = 0; l < layer_count(); ++l) {
      z = (weight(l) * y).colwise() + bias(l);
      apply_activation<Scalar>(activations_[l], z, y);
    }
    return y;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.pre.resize(layer_count());
    tape.post.resize(layer_count() + 1);
    tape.post[0] = x;
    for (int l = 0; l < layer_count(); ++l) {
      tape.pre[l] = (weight(l) * tape.post[l]).colwise() + bias(l);
      apply_activation<Scalar>(activations_[l], tape.pre[l], tape.post[l + 1]);
    }
    return tape.post.back();
  }

  /// Reverse pass. Adds dL/dθ into `grad` (when non-null) and returns dL/dx.
  Matrix backward(const Tape& tape, const Matrix& d_out, Vector* grad) const {
    if (d_out.rows() != output_dim() || d_out.cols() != tape.post[0].cols())
      throw ContractViolation("Mlp::backward: output gradient shape mismatch");
    if (grad && grad->size() != param_count()) throw ContractViolation("Mlp::backward: gradient length mismatch");
    Matrix delta = d_out;
    Matrix deriv;
    for (int l = layer_count() - 1; l >= 0; --l) {
      activation_derivative<Scalar>(activations_[l], tape.pre[l], tape.post[l + 1], deriv);
      delta.array() *= deriv.array();
      if (grad) {
        const Eigen::Index off = offsets_[l];
        const Eigen::Index wsize = static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1];
        Eigen::Map<Matrix> gw(grad->data() + off, widths_[l + 1], widths_[l]);
        Eigen::Map<Vector> gb(grad->data() + off + wsize, widths_[l + 1]);
        gw.noalias() += delta * tape.post[l].transpose();
        gb += delta.rowwise().sum();
      }
      Matrix next = weight(l).transpose() * delta;
      delta.swap(next);
    }
    return delta;
  }

 private:
  void check_input(const Matrix& x) const {
    if (x.rows() != input_dim())
      throw ContractViolation("Mlp::forward: expected " + std::to_string(input_dim()) + " input rows, got " +
                              std::to_string(x.rows()));
  }

  std::vector<int> widths_;
  std::vector<Activation> activations_;
  std::vector<Eigen::Index> offsets_;
  Vector params_;
};

using Net = Mlp<double>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  AdamState() = default;
  AdamState(Eigen::Index n, AdamConfig cfg) : config(cfg), m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One adaptive-moment update with bias correction. Throws on non-finite
/// gradients, leaving `params` and `state` untouched.
void adam_step(AdamState& state, Eigen::VectorXd& params, const Eigen::VectorXd& grad);

/// target <- (1 - rate) * target + rate * online
void soft_update(Net& target, const Net& online, double rate);

// Text checkpoint: an architecture header followed by one hexfloat parameter
// per line, which round-trips bit-exactly.
void save_checkpoint(std::ostream& out, const Net& net, const std::string& tag = "net");
Net load_checkpoint(std::istream& in, std::string* tag = nullptr);
void save_checkpoint(const std::string& path, const Net& net, const std::string& tag = "net");
Net load_checkpoint(const std::string& path, std::string* tag = nullptr);

/// Central differences of `f` at `x` with step `h`.
Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-5);

/// ||g - fd||_inf / max(||g||_inf, ||fd||_inf); zero when both vanish.
double gradient_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric);

}  // namespace sorl
