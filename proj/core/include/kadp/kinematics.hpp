// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/rng.hpp"

namespace kadp {

// Per-node residual below this (meters) counts a node-space target as
// feasible. Chosen well below the millimeter scale at which infeasibility
// becomes task-relevant.
inline constexpr double kFeasibilityTol = 1e-4;

// Node positions for configuration q; the gripper channel passes through.
// FK is defined for any finite q — no clamping is applied here.
NodeState forward_kinematics(const KinematicChain& chain, const JointVector& q,
                             double gripper = 0.0);

// Stacked d(node positions)/dq, 3m x n. Rows 3i..3i+2 belong to node i;
// column j is zero for nodes anchored before joint j.
Eigen::MatrixXd node_jacobian(const KinematicChain& chain, const JointVector& q);

// World origins of every joint frame plus the flange point after the last
// link offset: 3 x (n_dof + 1). Used to build link collision capsules.
Eigen::Matrix3Xd joint_frame_origins(const KinematicChain& chain, const JointVector& q);

// Tool pose: the last joint's post-rotation frame, positioned at the mean
// anchor of the nodes attached to that joint (the gripper midpoint on the
// 7-DoF preset, the tip node on the planar ones). Throws when no node is
// anchored there.
struct GripperFrame {
  Eigen::Vector3d origin;
  Eigen::Matrix3d rotation;
};
GripperFrame gripper_frame(const KinematicChain& chain, const JointVector& q);

struct IkOptions {
  int max_iterations = 200;
  double grad_tolerance = 1e-10;   // inf-norm of the projected gradient
  double step_tolerance = 1e-12;   // norm of the accepted (projected) step
  double initial_damping = 1e-4;
  int max_restarts = 1;            // extra solves when the first is unconverged
};

struct IkReport {
  bool converged = false;
  int iterations = 0;   // accepted-step iterations across all starts
  int restarts = 0;     // restarts actually taken
  double objective = 0.0;       // sum_i lambda_i^2 ||p_i - t_i||^2 at the solution
  double mean_residual = 0.0;   // mean_i ||p_i - t_i|| (unweighted)
  // Objective value after every accepted step of the winning start,
  // including the initial point. Non-increasing by construction.
  std::vector<double> objective_trace;
};

// Whole-body IK: minimizes sum_i lambda_i^2 ||F_fk(q)_i - target_i||^2
// subject to the chain's joint limits (box projection, not penalty).
//
// Damped least-squares steps with adaptive damping; iterates are projected
// onto the limit box. Always returns the best iterate found — unreachable
// targets yield the least-squares minimizer, never a failure. If the first
// solve hits the iteration cap, up to `max_restarts` additional solves start
// from deterministic limit-interval-uniform samples (seeded from a content
// hash of the problem), and near-ties in objective (<1e-12) break toward the
// smallest ||q - q_init||.
JointVector solve_ik(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                     const IkWeights& weights, const JointVector& q_init,
                     const IkOptions& options = {}, IkReport* report = nullptr);

inline JointVector solve_ik(const KinematicChain& chain, const NodeState& target,
                            const IkWeights& weights, const JointVector& q_init,
                            const IkOptions& options = {}, IkReport* report = nullptr) {
  return solve_ik(chain, target.positions, weights, q_init, options, report);
}

// Mean per-node Euclidean residual (meters) at the solve_ik solution.
double ik_error(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                const IkWeights& weights, const JointVector& q_init,
                const IkOptions& options = {});

// True when some in-limits q reproduces every node of `target` to within
// kFeasibilityTol (checked by solving from q_hint).
bool node_state_feasible(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                         const IkWeights& weights, const JointVector& q_hint);

// q ~ uniform per joint over [limits_min, limits_max].
JointVector sample_feasible_config(const KinematicChain& chain, Rng& rng);

struct NodeSufficiencyReport {
  int n_samples = 0;
  int required_rank = 0;          // chain n_dof
  int full_rank_count = 0;
  double fraction_full_rank = 0.0;
  bool sufficient = false;        // full rank at >= 99% of samples
  std::vector<JointVector> deficient_samples;
};

// Checks numerically (rank of the node Jacobian at sampled configurations)
// whether the node set pins down the full joint configuration.
NodeSufficiencyReport validate_node_sufficiency(const KinematicChain& chain,
                                                int n_samples = 1000,
                                                std::uint64_t seed = 0x6b616470u);

}  // namespace kadp
