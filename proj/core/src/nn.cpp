// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/nn.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "kadp/rng.hpp"

namespace kadp {

std::ptrdiff_t param_count(const ParamList& params) {
  std::ptrdiff_t total = 0;
  for (const ParamView& p : params) total += p.size;
  return total;
}

void zero_all(const ParamList& params) {
  for (const ParamView& p : params) std::memset(p.data, 0, static_cast<std::size_t>(p.size) * sizeof(double));
}

std::uint64_t param_hash(const ParamList& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const ParamView& p : params)
    h = fnv1a_append(h, p.data, static_cast<std::size_t>(p.size) * sizeof(double));
  return h;
}

void save_params(std::ostream& out, const ParamList& params) {
  for (const ParamView& p : params)
    out.write(reinterpret_cast<const char*>(p.data), static_cast<std::streamsize>(p.size * static_cast<std::ptrdiff_t>(sizeof(double))));
}

void load_params(std::istream& in, const ParamList& params) {
  for (const ParamView& p : params) {
    in.read(reinterpret_cast<char*>(p.data), static_cast<std::streamsize>(p.size * static_cast<std::ptrdiff_t>(sizeof(double))));
    if (!in) throw std::runtime_error("load_params: stream truncated");
  }
}

Eigen::VectorXd pack_params(const ParamList& params) {
  Eigen::VectorXd flat(param_count(params));
  std::ptrdiff_t at = 0;
  for (const ParamView& p : params) {
    flat.segment(at, p.size) = Eigen::Map<const Eigen::VectorXd>(p.data, p.size);
    at += p.size;
  }
  return flat;
}

void unpack_params(const ParamList& params, const Eigen::VectorXd& flat) {
  if (flat.size() != param_count(params)) throw std::invalid_argument("unpack_params: size mismatch");
  std::ptrdiff_t at = 0;
  for (const ParamView& p : params) {
    Eigen::Map<Eigen::VectorXd>(p.data, p.size) = flat.segment(at, p.size);
    at += p.size;
  }
}

void Linear::init(Rng& rng, double gain) {
  if (gain == 0.0) {
    W.setZero();
    b.setZero();
    return;
  }
  const double scale = gain * std::sqrt(2.0 / static_cast<double>(W.cols()));
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = scale * rng.normal();
  b.setZero();
}

Eigen::MatrixXd Linear::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != W.cols()) throw std::invalid_argument("Linear::apply: input dim mismatch");
  return (W * x).colwise() + b;
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Linear& grad) const {
  grad.W.noalias() += dy * x.transpose();
  grad.b.noalias() += dy.rowwise().sum();
  return W.transpose() * dy;
}

void Linear::collect(ParamList& out) {
  out.push_back({W.data(), W.size()});
  out.push_back({b.data(), b.size()});
}

Eigen::MatrixXd gelu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2)); });
}

Eigen::MatrixXd gelu_grad(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
    return cdf + v * pdf;
  });
}

Eigen::MatrixXd tanh_act(const Eigen::MatrixXd& x) { return x.array().tanh(); }

Eigen::MatrixXd tanh_grad_from_output(const Eigen::MatrixXd& y) {
  return (1.0 - y.array().square()).matrix();
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = x;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    Eigen::VectorXd col = y.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp();
    y.col(j) = col / col.sum();
  }
  return y;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& y, const Eigen::MatrixXd& dy) {
  Eigen::MatrixXd dx(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double dot = y.col(j).dot(dy.col(j));
    dx.col(j) = (y.col(j).array() * (dy.col(j).array() - dot)).matrix();
  }
  return dx;
}

Eigen::MatrixXd LayerNorm::apply(const Eigen::MatrixXd& x) const {
  Cache cache;
  return forward(x, cache);
}

Eigen::MatrixXd LayerNorm::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != gain.size()) throw std::invalid_argument("LayerNorm: dim mismatch");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  cache.inv_sd = (var.array() + kEps).rsqrt();
  cache.x_hat = centered.array().rowwise() * cache.inv_sd.array();
  return (cache.x_hat.array().colwise() * gain.array()).colwise() + bias.array();
}

Eigen::MatrixXd LayerNorm::backward(const Cache& cache, const Eigen::MatrixXd& dy, LayerNorm& grad) const {
  grad.gain.noalias() += (dy.array() * cache.x_hat.array()).rowwise().sum().matrix();
  grad.bias.noalias() += dy.rowwise().sum();
  const Eigen::MatrixXd dxhat = dy.array().colwise() * gain.array();
  const double d = static_cast<double>(dy.rows());
  // dL/dx = inv_sd/d * (d*dxhat - sum(dxhat) - x_hat * sum(dxhat .* x_hat))
  const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
  const Eigen::RowVectorXd sum_dxhat_xhat = (dxhat.array() * cache.x_hat.array()).colwise().sum();
  Eigen::MatrixXd dx = d * dxhat;
  dx.rowwise() -= sum_dxhat;
  dx.array() -= cache.x_hat.array().rowwise() * sum_dxhat_xhat.array();
  dx.array().rowwise() *= (cache.inv_sd / d).array();
  return dx;
}

void LayerNorm::collect(ParamList& out) {
  out.push_back({gain.data(), gain.size()});
  out.push_back({bias.data(), bias.size()});
}

Eigen::VectorXd sinusoidal_embedding(double position, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoidal_embedding: dim must be positive and even");
  Eigen::VectorXd emb(dim);
  const int half = dim / 2;
  for (int j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / std::max(1, half - 1));
    emb[2 * j] = std::sin(position * freq);
    emb[2 * j + 1] = std::cos(position * freq);
  }
  return emb;
}

void AdamW::step(const ParamList& params, const ParamList& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("AdamW::step: list size mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Eigen::VectorXd::Zero(params[i].size);
      v_[i] = Eigen::VectorXd::Zero(params[i].size);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size || m_[i].size() != params[i].size)
      throw std::invalid_argument("AdamW::step: shape mismatch");
    Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data, grads[i].size);
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const Eigen::VectorXd m_hat = m_[i] / bc1;
    const Eigen::VectorXd v_hat = v_[i] / bc2;
    p -= config_.lr * (m_hat.array() / (v_hat.array().sqrt() + config_.eps)).matrix();
    p -= config_.lr * config_.weight_decay * p;
  }
}

void AdamW::save_state(std::ostream& out) const {
  const std::int64_t n = static_cast<std::int64_t>(m_.size());
  out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out.write(reinterpret_cast<const char*>(m_[static_cast<std::size_t>(i)].data()),
              static_cast<std::streamsize>(m_[static_cast<std::size_t>(i)].size() * static_cast<Eigen::Index>(sizeof(double))));
    out.write(reinterpret_cast<const char*>(v_[static_cast<std::size_t>(i)].data()),
              static_cast<std::streamsize>(v_[static_cast<std::size_t>(i)].size() * static_cast<Eigen::Index>(sizeof(double))));
  }
}

void AdamW::load_state(std::istream& in, const ParamList& params) {
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != static_cast<std::int64_t>(params.size()))
    throw std::runtime_error("AdamW::load_state: malformed state");
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i].resize(params[i].size);
    v_[i].resize(params[i].size);
    in.read(reinterpret_cast<char*>(m_[i].data()), static_cast<std::streamsize>(params[i].size * static_cast<std::ptrdiff_t>(sizeof(double))));
    in.read(reinterpret_cast<char*>(v_[i].data()), static_cast<std::streamsize>(params[i].size * static_cast<std::ptrdiff_t>(sizeof(double))));
    if (!in) throw std::runtime_error("AdamW::load_state: stream truncated");
  }
}

void SgdMomentum::step(const ParamList& params, const ParamList& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("SgdMomentum::step: list size mismatch");
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i] = Eigen::VectorXd::Zero(params[i].size);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size || velocity_[i].size() != params[i].size)
      throw std::invalid_argument("SgdMomentum::step: shape mismatch");
    Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data, grads[i].size);
    velocity_[i] = momentum_ * velocity_[i] - lr_ * g;
    p += velocity_[i];
  }
}

}  // namespace kadp
