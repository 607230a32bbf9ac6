// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable node-to-joint surrogate: a small MLP regression of the
// whole-body IK map, trained once per chain and frozen. The optimizer-based
// solver stays the ground truth; this network exists to give cheap, smooth
// approximate inverse kinematics (with exact analytic Jacobians of itself)
// inside training loops.

#pragma once

#include <cstdint>
#include <string>

#include "kadp/chain.hpp"
#include "kadp/diffusion.hpp"
#include "kadp/nn.hpp"

namespace kadp {

class Rng;

struct IkMlpConfig {
  int hidden = 256;
  int epochs = 24;
  int batch = 256;
  double lr = 2e-2;
  double momentum = 0.9;
  double val_fraction = 0.1;
  // Per-joint training sub-intervals. When empty, the full joint-limit box is
  // used. Multi-branch chains must restrict these so that node positions
  // determine joints uniquely (otherwise MSE regression averages branches).
  Eigen::VectorXd branch_lo;
  Eigen::VectorXd branch_hi;
};

struct MlpIkModel {
  Linear l1, l2, l3;  // 3m -> hidden -> hidden -> n, tanh between layers
  Eigen::VectorXd in_mean, in_scale;
  Eigen::VectorXd out_mean, out_scale;
  Eigen::VectorXd limits_min, limits_max;
  Eigen::VectorXd branch_lo, branch_hi;
  std::uint64_t chain_hash = 0;
  std::int64_t n_train_samples = 0;
  double validation_rmse = 0.0;  // held-out per-joint RMSE, radians
  int n_nodes = 0;

  int n_joints() const { return static_cast<int>(out_mean.size()); }
  ParamList params();
  std::uint64_t weights_hash() const;
};

// Samples {(F_fk(q), q)} with q uniform in the branch box and fits the MLP by
// mini-batch SGD with momentum on z-scored data. Refuses chains whose node
// set does not determine the configuration (the target would not be a
// function). Deterministic for a fixed rng seed.
MlpIkModel train_ik_mlp(const KinematicChain& chain, std::int64_t n_samples, const IkMlpConfig& config,
                        Rng& rng);

// Throws if the model was trained on a different chain.
void ik_mlp_check_chain(const MlpIkModel& model, const KinematicChain& chain);

// Normalized forward pass, output clamped to the joint limits. Pure.
JointVector ik_mlp_apply(const MlpIkModel& model, const Eigen::Matrix3Xd& positions);
JointVector ik_mlp_apply(const MlpIkModel& model, const NodeState& nodes);

// Exact Jacobian (n x 3m) of ik_mlp_apply, with the output clamp treated as
// identity strictly inside the limits and zero at or beyond them.
Eigen::MatrixXd ik_mlp_gradient(const MlpIkModel& model, const Eigen::Matrix3Xd& positions);
Eigen::MatrixXd ik_mlp_gradient(const MlpIkModel& model, const NodeState& nodes);

// Adapter for the diffusion forward process (ignores the warm-start hint).
NodeToJointMap mlp_ik_map(const MlpIkModel& model, const KinematicChain& chain);

// Versioned binary checkpoint ("KADPIK01").
void save_ik_mlp(const MlpIkModel& model, const std::string& path);
MlpIkModel load_ik_mlp(const std::string& path);

}  // namespace kadp
