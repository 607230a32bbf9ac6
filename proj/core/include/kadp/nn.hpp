// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense-network toolkit used by the IK surrogate and the denoiser.
// Networks hand-roll their forward/backward passes from these pieces; there
// is no autodiff tape. Batches are stored column-wise (one sample per
// column) to match Eigen's default layout.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

namespace kadp {

class Rng;

// A mutable view of one parameter tensor's storage. Optimizers, serializers,
// and hashers treat a model as an ordered list of these.
struct ParamView {
  double* data = nullptr;
  std::ptrdiff_t size = 0;
};
using ParamList = std::vector<ParamView>;

std::ptrdiff_t param_count(const ParamList& params);
void zero_all(const ParamList& params);
// FNV-1a over the raw bytes of every tensor, in list order.
std::uint64_t param_hash(const ParamList& params);
void save_params(std::ostream& out, const ParamList& params);
void load_params(std::istream& in, const ParamList& params);
// Flattens to / restores from a single vector (finite-difference probes).
Eigen::VectorXd pack_params(const ParamList& params);
void unpack_params(const ParamList& params, const Eigen::VectorXd& flat);

// Fully connected layer y = W x + b. The same struct doubles as its own
// gradient accumulator: a model keeps one instance for values and a
// shape-matched instance for d(loss)/d(value).
struct Linear {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;

  Linear() = default;
  Linear(int out_dim, int in_dim) : W(Eigen::MatrixXd::Zero(out_dim, in_dim)), b(Eigen::VectorXd::Zero(out_dim)) {}

  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }

  // He-style fan-in scaling; pass gain 0 for a zero-initialized head.
  void init(Rng& rng, double gain = 1.0);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  // Accumulates dW/db into `grad` and returns dL/dx. `x` must be the input
  // the forward pass saw.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Linear& grad) const;

  void collect(ParamList& out);
};

// Smooth activations with elementwise derivatives.
Eigen::MatrixXd gelu(const Eigen::MatrixXd& x);
Eigen::MatrixXd gelu_grad(const Eigen::MatrixXd& x);
Eigen::MatrixXd tanh_act(const Eigen::MatrixXd& x);
// Derivative expressed through the activation output (1 - y^2).
Eigen::MatrixXd tanh_grad_from_output(const Eigen::MatrixXd& y);

// Column-wise softmax and its backward pass (dy is the gradient at the
// softmax output y).
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& x);
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& y, const Eigen::MatrixXd& dy);

// Feature-dimension layer normalization with learned gain/bias.
struct LayerNorm {
  Eigen::VectorXd gain;
  Eigen::VectorXd bias;

  LayerNorm() = default;
  explicit LayerNorm(int dim) : gain(Eigen::VectorXd::Ones(dim)), bias(Eigen::VectorXd::Zero(dim)) {}

  struct Cache {
    Eigen::MatrixXd x_hat;      // normalized input
    Eigen::RowVectorXd inv_sd;  // 1 / sqrt(var + eps) per column
  };
  static constexpr double kEps = 1e-6;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy, LayerNorm& grad) const;

  void collect(ParamList& out);
};

// Sinusoidal position/step embedding (dim must be even).
Eigen::VectorXd sinusoidal_embedding(double position, int dim);

// Decoupled-weight-decay adaptive-moment optimizer.
struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  void step(const ParamList& params, const ParamList& grads);
  const AdamWConfig& config() const { return config_; }
  void save_state(std::ostream& out) const;
  void load_state(std::istream& in, const ParamList& params);

 private:
  AdamWConfig config_;
  std::vector<Eigen::VectorXd> m_, v_;
  std::int64_t t_ = 0;
};

// Plain mini-batch gradient descent with momentum.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void set_lr(double lr) { lr_ = lr; }
  void step(const ParamList& params, const ParamList& grads);

 private:
  double lr_;
  double momentum_;
  std::vector<Eigen::VectorXd> velocity_;
};

}  // namespace kadp
