// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <string>
#include <vector>

namespace kadp {

// Joint-angle configuration in radians.
using JointVector = Eigen::VectorXd;

// One revolute joint: rotation about `axis` followed by a fixed translation
// to the next joint frame. `axis` must have unit norm.
struct JointDescriptor {
  Eigen::Vector3d axis;
  Eigen::Vector3d offset;
};

// A tracked 3D node, rigidly attached to the rotated frame of `joint`.
struct NodeAnchor {
  int joint = 0;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

// Robot state/action atom: m node positions plus one gripper channel.
//
// The gripper value is continuous in [0, 1] while actions are being
// generated (0 = open, 1 = closed); execution thresholds it.
struct NodeState {
  Eigen::Matrix3Xd positions;  // 3 x m
  double gripper = 0.0;

  Eigen::Index count() const { return positions.cols(); }
  bool gripper_closed() const { return gripper >= 0.5; }
};

// Immutable serial chain of revolute joints with tracked nodes.
//
// Frame convention: world = base_pose, then per joint i the frame rotates by
// q_i about joints[i].axis and translates by joints[i].offset. A node
// anchored at joint i lives in the rotated frame of joint i (it moves with
// q_1..q_i but not with later joints).
class KinematicChain {
 public:
  KinematicChain(std::vector<JointDescriptor> joints, Eigen::VectorXd limits_min,
                 Eigen::VectorXd limits_max, std::vector<NodeAnchor> node_anchors,
                 const Eigen::Isometry3d& base_pose = Eigen::Isometry3d::Identity(),
                 std::string name = {});

  int n_dof() const { return static_cast<int>(joints_.size()); }
  int n_nodes() const { return static_cast<int>(node_anchors_.size()); }

  const std::vector<JointDescriptor>& joints() const { return joints_; }
  const std::vector<NodeAnchor>& node_anchors() const { return node_anchors_; }
  const Eigen::VectorXd& limits_min() const { return limits_min_; }
  const Eigen::VectorXd& limits_max() const { return limits_max_; }
  const Eigen::Isometry3d& base_pose() const { return base_pose_; }
  const std::string& name() const { return name_; }

  JointVector clamp(const JointVector& q) const;
  bool within_limits(const JointVector& q, double tol = 0.0) const;
  JointVector mid_config() const { return 0.5 * (limits_min_ + limits_max_); }

  // Chain with the same joints but a subset of the tracked nodes.
  KinematicChain with_node_subset(const std::vector<int>& node_indices) const;
  // Chain with tightened per-joint limits (used for branch-region sampling).
  KinematicChain with_limits(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) const;

  // Content hash over every defining number; checkpoints record it so a
  // model trained against one chain cannot silently run against another.
  std::uint64_t hash() const { return hash_; }

 private:
  std::vector<JointDescriptor> joints_;
  Eigen::VectorXd limits_min_, limits_max_;
  std::vector<NodeAnchor> node_anchors_;
  Eigen::Isometry3d base_pose_;
  std::string name_;
  std::uint64_t hash_ = 0;
};

// Per-node nonnegative weights for the whole-body IK objective; at least one
// weight must be positive.
class IkWeights {
 public:
  explicit IkWeights(Eigen::VectorXd lambdas);
  static IkWeights uniform(int n_nodes, double value = 1.0);

  const Eigen::VectorXd& lambdas() const { return lambdas_; }
  Eigen::Index size() const { return lambdas_.size(); }
  double operator[](Eigen::Index i) const { return lambdas_[i]; }

  IkWeights subset(const std::vector<int>& node_indices) const;

 private:
  Eigen::VectorXd lambdas_;
};

// Loads a chain from the structured-text config format:
//   { "joints": [{"axis": [x,y,z], "offset": [x,y,z], "limits": [lo,hi]}, ...],
//     "nodes":  [{"joint": i, "offset": [x,y,z]}, ...],
//     "base":   {"translation": [x,y,z], "rotation": [9 row-major entries]} }
// Angles are radians, lengths meters, joint indices 0-based.
KinematicChain load_chain_file(const std::string& path);
KinematicChain parse_chain_json(const std::string& json_text, const std::string& name = {});
std::string chain_to_json(const KinematicChain& chain);

// Built-in chain presets.
//
// "srs7":    7-DoF spherical-shoulder/elbow/wrist arm with 8 nodes (6 along
//            the arm, 2 on the gripper fingers). The 6th arm node sits at
//            the wrist center so that the {wrist, finger, finger} subset is
//            provably rank-deficient.
// "planar2": 2-link planar arm in the xz-plane, single elbow branch,
//            2 nodes (elbow, tip).
// "planar2w":planar2 with wide limits (test chain, no clamping effects).
KinematicChain make_preset_chain(const std::string& preset);

// Default IK weights for a preset (fingers weighted 2 on srs7).
IkWeights default_ik_weights(const KinematicChain& chain);

// Named node subsets for the ablations. For srs7: "full" (all 8),
// "node5" (nodes at joints 1,4,6 + fingers), "node3" (wrist node + fingers).
// For planar chains: "full", "node5" -> distal half, "node3" -> tip only.
std::vector<int> preset_node_subset(const KinematicChain& chain, const std::string& subset);

}  // namespace kadp
