// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/ikmlp.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "kadp/kinematics.hpp"
#include "kadp/rng.hpp"

namespace kadp {

namespace {

constexpr char kMagic[9] = "KADPIK01";

Eigen::VectorXd flatten_positions(const Eigen::Matrix3Xd& positions) {
  return Eigen::Map<const Eigen::VectorXd>(positions.data(), positions.size());
}

void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  const std::int64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(double))));
}

Eigen::VectorXd read_vec(std::istream& in) {
  std::int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n < 0 || n > (1 << 28)) throw std::runtime_error("ik checkpoint: bad vector length");
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * static_cast<std::int64_t>(sizeof(double))));
  if (!in) throw std::runtime_error("ik checkpoint: truncated");
  return v;
}

}  // namespace

ParamList MlpIkModel::params() {
  ParamList out;
  l1.collect(out);
  l2.collect(out);
  l3.collect(out);
  return out;
}

std::uint64_t MlpIkModel::weights_hash() const {
  return param_hash(const_cast<MlpIkModel*>(this)->params());
}

MlpIkModel train_ik_mlp(const KinematicChain& chain, std::int64_t n_samples, const IkMlpConfig& config,
                        Rng& rng) {
  if (n_samples <= 0) throw std::invalid_argument("train_ik_mlp: n_samples must be positive");
  if (config.hidden <= 0 || config.epochs <= 0 || config.batch <= 0)
    throw std::invalid_argument("train_ik_mlp: bad hyperparameters");
  const NodeSufficiencyReport sufficiency = validate_node_sufficiency(chain);
  if (!sufficiency.sufficient)
    throw std::invalid_argument(
        "train_ik_mlp: node set does not determine the configuration; the node-to-joint map is not "
        "a function on this chain");

  const int n = chain.n_dof();
  const int in_dim = 3 * chain.n_nodes();
  Eigen::VectorXd lo = config.branch_lo.size() ? config.branch_lo : chain.limits_min();
  Eigen::VectorXd hi = config.branch_hi.size() ? config.branch_hi : chain.limits_max();
  if (lo.size() != n || hi.size() != n) throw std::invalid_argument("train_ik_mlp: branch box dim mismatch");
  for (int j = 0; j < n; ++j) {
    lo[j] = std::max(lo[j], chain.limits_min()[j]);
    hi[j] = std::min(hi[j], chain.limits_max()[j]);
    if (lo[j] > hi[j]) throw std::invalid_argument("train_ik_mlp: empty branch box");
  }

  Eigen::MatrixXd X(in_dim, n_samples);
  Eigen::MatrixXd Y(n, n_samples);
  JointVector q(n);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    for (int j = 0; j < n; ++j) q[j] = rng.uniform(lo[j], hi[j]);
    X.col(i) = flatten_positions(forward_kinematics(chain, q).positions);
    Y.col(i) = q;
  }

  const std::int64_t n_val = std::max<std::int64_t>(1, static_cast<std::int64_t>(static_cast<double>(n_samples) * config.val_fraction));
  const std::int64_t n_train = n_samples - n_val;
  if (n_train <= 0) throw std::invalid_argument("train_ik_mlp: too few samples for the validation split");

  MlpIkModel model;
  model.n_nodes = chain.n_nodes();
  model.chain_hash = chain.hash();
  model.n_train_samples = n_train;
  model.limits_min = chain.limits_min();
  model.limits_max = chain.limits_max();
  model.branch_lo = lo;
  model.branch_hi = hi;
  model.in_mean = X.leftCols(n_train).rowwise().mean();
  model.out_mean = Y.leftCols(n_train).rowwise().mean();
  // Scale floor keeps constant dimensions (e.g. the out-of-plane coordinate
  // of a planar chain) from blowing up the normalized inputs.
  auto scale_of = [&](const Eigen::MatrixXd& M, const Eigen::VectorXd& mean) {
    Eigen::VectorXd var = (M.leftCols(n_train).colwise() - mean).array().square().rowwise().mean();
    return (var.array().sqrt().max(1e-3)).matrix().eval();
  };
  model.in_scale = scale_of(X, model.in_mean);
  model.out_scale = scale_of(Y, model.out_mean);

  model.l1 = Linear(config.hidden, in_dim);
  model.l2 = Linear(config.hidden, config.hidden);
  model.l3 = Linear(n, config.hidden);
  model.l1.init(rng);
  model.l2.init(rng);
  model.l3.init(rng);

  Eigen::MatrixXd Xn = (X.colwise() - model.in_mean).array().colwise() / model.in_scale.array();
  Eigen::MatrixXd Yn = (Y.colwise() - model.out_mean).array().colwise() / model.out_scale.array();

  MlpIkModel grads = model;  // shape clone; values overwritten each step
  ParamList params = model.params();
  ParamList grad_list = grads.params();
  SgdMomentum opt(config.lr, config.momentum);

  std::vector<std::int64_t> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch == (config.epochs * 3) / 5) opt.set_lr(config.lr * 0.1);
    if (epoch == (config.epochs * 17) / 20) opt.set_lr(config.lr * 0.01);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    for (std::int64_t start = 0; start < n_train; start += config.batch) {
      const std::int64_t b = std::min<std::int64_t>(config.batch, n_train - start);
      Eigen::MatrixXd xb(in_dim, b), yb(n, b);
      for (std::int64_t i = 0; i < b; ++i) {
        xb.col(i) = Xn.col(order[static_cast<std::size_t>(start + i)]);
        yb.col(i) = Yn.col(order[static_cast<std::size_t>(start + i)]);
      }
      const Eigen::MatrixXd h1 = tanh_act(model.l1.apply(xb));
      const Eigen::MatrixXd h2 = tanh_act(model.l2.apply(h1));
      const Eigen::MatrixXd yp = model.l3.apply(h2);
      const double denom = static_cast<double>(b * n);
      zero_all(grad_list);
      const Eigen::MatrixXd dyp = 2.0 * (yp - yb) / denom;
      const Eigen::MatrixXd dh2 = model.l3.backward(h2, dyp, grads.l3).cwiseProduct(tanh_grad_from_output(h2));
      const Eigen::MatrixXd dh1 = model.l2.backward(h1, dh2, grads.l2).cwiseProduct(tanh_grad_from_output(h1));
      model.l1.backward(xb, dh1, grads.l1);
      opt.step(params, grad_list);
    }
  }

  double sq_sum = 0.0;
  for (std::int64_t i = n_train; i < n_samples; ++i) {
    const JointVector pred = ik_mlp_apply(model, Eigen::Matrix3Xd(Eigen::Map<const Eigen::Matrix3Xd>(
                                               X.col(i).data(), 3, chain.n_nodes())));
    sq_sum += (pred - Y.col(i)).squaredNorm();
  }
  model.validation_rmse = std::sqrt(sq_sum / static_cast<double>(n_val * n));
  return model;
}

void ik_mlp_check_chain(const MlpIkModel& model, const KinematicChain& chain) {
  if (model.chain_hash != chain.hash())
    throw std::invalid_argument("ik mlp: model was trained on a different chain (hash mismatch)");
}

JointVector ik_mlp_apply(const MlpIkModel& model, const Eigen::Matrix3Xd& positions) {
  if (positions.cols() != model.n_nodes) throw std::invalid_argument("ik_mlp_apply: node count mismatch");
  const Eigen::VectorXd xn =
      (flatten_positions(positions) - model.in_mean).array() / model.in_scale.array();
  const Eigen::MatrixXd h1 = tanh_act(model.l1.apply(xn));
  const Eigen::MatrixXd h2 = tanh_act(model.l2.apply(h1));
  const Eigen::VectorXd raw =
      (model.l3.apply(h2).col(0).array() * model.out_scale.array()) + model.out_mean.array();
  return raw.cwiseMax(model.limits_min).cwiseMin(model.limits_max);
}

JointVector ik_mlp_apply(const MlpIkModel& model, const NodeState& nodes) {
  return ik_mlp_apply(model, nodes.positions);
}

Eigen::MatrixXd ik_mlp_gradient(const MlpIkModel& model, const Eigen::Matrix3Xd& positions) {
  if (positions.cols() != model.n_nodes) throw std::invalid_argument("ik_mlp_gradient: node count mismatch");
  const Eigen::VectorXd xn =
      (flatten_positions(positions) - model.in_mean).array() / model.in_scale.array();
  const Eigen::MatrixXd h1 = tanh_act(model.l1.apply(xn));
  const Eigen::MatrixXd h2 = tanh_act(model.l2.apply(h1));
  const Eigen::VectorXd raw =
      (model.l3.apply(h2).col(0).array() * model.out_scale.array()) + model.out_mean.array();

  // Chain rule through denorm * l3 * tanh * l2 * tanh * l1 * norm.
  Eigen::MatrixXd jac = model.l3.W;  // n x hidden
  jac = jac.array().rowwise() * tanh_grad_from_output(h2).col(0).transpose().array();
  jac = jac * model.l2.W;
  jac = jac.array().rowwise() * tanh_grad_from_output(h1).col(0).transpose().array();
  jac = jac * model.l1.W;
  jac = jac.array().colwise() * model.out_scale.array();
  jac = jac.array().rowwise() / model.in_scale.transpose().array();
  for (int i = 0; i < model.n_joints(); ++i)
    if (raw[i] <= model.limits_min[i] || raw[i] >= model.limits_max[i]) jac.row(i).setZero();
  return jac;
}

Eigen::MatrixXd ik_mlp_gradient(const MlpIkModel& model, const NodeState& nodes) {
  return ik_mlp_gradient(model, nodes.positions);
}

NodeToJointMap mlp_ik_map(const MlpIkModel& model, const KinematicChain& chain) {
  ik_mlp_check_chain(model, chain);
  return [&model](const Eigen::Matrix3Xd& positions, const JointVector&) {
    return ik_mlp_apply(model, positions);
  };
}

void save_ik_mlp(const MlpIkModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_ik_mlp: cannot open " + path);
  out.write(kMagic, 8);
  const std::int64_t dims[4] = {model.n_nodes, static_cast<std::int64_t>(model.out_mean.size()),
                                static_cast<std::int64_t>(model.l1.out_dim()), model.n_train_samples};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(&model.chain_hash), sizeof(model.chain_hash));
  out.write(reinterpret_cast<const char*>(&model.validation_rmse), sizeof(model.validation_rmse));
  for (const Eigen::VectorXd* v : {&model.in_mean, &model.in_scale, &model.out_mean, &model.out_scale,
                                   &model.limits_min, &model.limits_max, &model.branch_lo, &model.branch_hi})
    write_vec(out, *v);
  save_params(out, const_cast<MlpIkModel&>(model).params());
  if (!out) throw std::runtime_error("save_ik_mlp: write failed");
}

MlpIkModel load_ik_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ik_mlp: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_ik_mlp: not a KADPIK01 checkpoint");
  std::int64_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  MlpIkModel model;
  model.n_nodes = static_cast<int>(dims[0]);
  const int n = static_cast<int>(dims[1]);
  const int hidden = static_cast<int>(dims[2]);
  model.n_train_samples = dims[3];
  in.read(reinterpret_cast<char*>(&model.chain_hash), sizeof(model.chain_hash));
  in.read(reinterpret_cast<char*>(&model.validation_rmse), sizeof(model.validation_rmse));
  if (!in || model.n_nodes <= 0 || n <= 0 || hidden <= 0) throw std::runtime_error("load_ik_mlp: malformed header");
  model.in_mean = read_vec(in);
  model.in_scale = read_vec(in);
  model.out_mean = read_vec(in);
  model.out_scale = read_vec(in);
  model.limits_min = read_vec(in);
  model.limits_max = read_vec(in);
  model.branch_lo = read_vec(in);
  model.branch_hi = read_vec(in);
  model.l1 = Linear(hidden, 3 * model.n_nodes);
  model.l2 = Linear(hidden, hidden);
  model.l3 = Linear(n, hidden);
  load_params(in, model.params());
  return model;
}

}  // namespace kadp
