// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/kinematics.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace kadp {

namespace {

struct FrameData {
  Eigen::Matrix3Xd nodes;              // 3 x m world node positions
  std::vector<Eigen::Vector3d> origin; // per-joint world frame origin
  std::vector<Eigen::Vector3d> axis;   // per-joint world rotation axis
};

FrameData compute_frames(const KinematicChain& chain, const JointVector& q) {
  const int n = chain.n_dof();
  const int m = chain.n_nodes();
  FrameData out;
  out.nodes.resize(3, m);
  out.origin.resize(static_cast<std::size_t>(n));
  out.axis.resize(static_cast<std::size_t>(n));

  Eigen::Isometry3d T = chain.base_pose();
  for (int i = 0; i < n; ++i) {
    const auto& joint = chain.joints()[static_cast<std::size_t>(i)];
    out.origin[static_cast<std::size_t>(i)] = T.translation();
    out.axis[static_cast<std::size_t>(i)] = T.linear() * joint.axis;
    T = T * Eigen::AngleAxisd(q[i], joint.axis);
    for (int k = 0; k < m; ++k) {
      if (chain.node_anchors()[static_cast<std::size_t>(k)].joint == i)
        out.nodes.col(k) = T * chain.node_anchors()[static_cast<std::size_t>(k)].offset;
    }
    T.translation() += T.linear() * joint.offset;
  }
  return out;
}

void check_dims(const KinematicChain& chain, const JointVector& q, const char* who) {
  if (q.size() != chain.n_dof())
    throw std::invalid_argument(std::string(who) + ": configuration size != n_dof");
  if (!q.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite configuration");
}

// lambda_i^2-weighted sum of squared node residuals.
double weighted_objective(const Eigen::Matrix3Xd& positions, const Eigen::Matrix3Xd& target,
                          const IkWeights& weights) {
  double f = 0.0;
  for (Eigen::Index i = 0; i < positions.cols(); ++i) {
    const double li = weights[i];
    f += li * li * (positions.col(i) - target.col(i)).squaredNorm();
  }
  return f;
}

struct LocalSolve {
  JointVector q;
  double objective = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

// One damped least-squares descent from q_start; iterates stay in the box.
LocalSolve solve_from(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                      const IkWeights& weights, const JointVector& q_start,
                      const IkOptions& opt) {
  const int n = chain.n_dof();
  const int m = chain.n_nodes();
  const Eigen::VectorXd& lo = chain.limits_min();
  const Eigen::VectorXd& hi = chain.limits_max();

  LocalSolve best;
  JointVector q = chain.clamp(q_start);
  Eigen::Matrix3Xd pos = compute_frames(chain, q).nodes;
  double f = weighted_objective(pos, target, weights);
  best.q = q;
  best.objective = f;
  best.trace.push_back(f);

  double mu = opt.initial_damping;
  Eigen::VectorXd residual(3 * m);

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    Eigen::MatrixXd J = node_jacobian(chain, q);
    for (int i = 0; i < m; ++i) {
      residual.segment<3>(3 * i) = weights[i] * (pos.col(i) - target.col(i));
      J.middleRows(3 * i, 3) *= weights[i];
    }
    const Eigen::VectorXd grad = 2.0 * J.transpose() * residual;

    // Projected gradient: at an active bound, only the in-feasible descent
    // component counts.
    double pg_inf = 0.0;
    for (int i = 0; i < n; ++i) {
      double g = grad[i];
      if (q[i] <= lo[i] && g > 0.0) g = 0.0;
      if (q[i] >= hi[i] && g < 0.0) g = 0.0;
      pg_inf = std::max(pg_inf, std::abs(g));
    }
    if (pg_inf <= opt.grad_tolerance) {
      best.converged = true;
      break;
    }

    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd Jtr = J.transpose() * residual;

    bool accepted = false;
    double step_norm = 0.0;
    for (int trial = 0; trial < 40 && !accepted; ++trial) {
      Eigen::MatrixXd H = JtJ;
      H.diagonal().array() += mu;
      const Eigen::VectorXd delta = H.ldlt().solve(-Jtr);
      const JointVector q_new = chain.clamp(q + delta);
      step_norm = (q_new - q).norm();
      const double f_new = weighted_objective(compute_frames(chain, q_new).nodes, target, weights);
      if (f_new < f) {
        q = q_new;
        pos = compute_frames(chain, q).nodes;
        f = f_new;
        mu = std::max(mu * 0.33, 1e-12);
        accepted = true;
      } else {
        mu = std::min(mu * 3.0, 1e12);
      }
    }
    ++best.iterations;

    if (accepted && f < best.objective) {
      best.q = q;
      best.objective = f;
      best.trace.push_back(f);
    }
    if (!accepted || step_norm <= opt.step_tolerance) {
      // No damping level can improve, or the projected step collapsed:
      // we are at a box-constrained stationary point to working precision.
      best.converged = true;
      break;
    }
  }
  return best;
}

}  // namespace

NodeState forward_kinematics(const KinematicChain& chain, const JointVector& q, double gripper) {
  check_dims(chain, q, "forward_kinematics");
  NodeState out;
  out.positions = compute_frames(chain, q).nodes;
  out.gripper = gripper;
  return out;
}

Eigen::Matrix3Xd joint_frame_origins(const KinematicChain& chain, const JointVector& q) {
  check_dims(chain, q, "joint_frame_origins");
  const int n = chain.n_dof();
  Eigen::Matrix3Xd out(3, n + 1);
  Eigen::Isometry3d T = chain.base_pose();
  for (int i = 0; i < n; ++i) {
    const auto& joint = chain.joints()[static_cast<std::size_t>(i)];
    out.col(i) = T.translation();
    T = T * Eigen::AngleAxisd(q[i], joint.axis);
    T.translation() += T.linear() * joint.offset;
  }
  out.col(n) = T.translation();
  return out;
}

GripperFrame gripper_frame(const KinematicChain& chain, const JointVector& q) {
  check_dims(chain, q, "gripper_frame");
  const int n = chain.n_dof();
  Eigen::Isometry3d T = chain.base_pose();
  for (int i = 0; i < n; ++i) {
    const auto& joint = chain.joints()[static_cast<std::size_t>(i)];
    T = T * Eigen::AngleAxisd(q[i], joint.axis);
    if (i + 1 < n) T.translation() += T.linear() * joint.offset;
  }
  Eigen::Vector3d mean_anchor = Eigen::Vector3d::Zero();
  int attached = 0;
  for (const NodeAnchor& a : chain.node_anchors()) {
    if (a.joint == n - 1) {
      mean_anchor += a.offset;
      ++attached;
    }
  }
  if (attached == 0) throw std::invalid_argument("gripper_frame: no node is anchored at the last joint");
  GripperFrame frame;
  frame.rotation = T.linear();
  frame.origin = T.translation() + frame.rotation * (mean_anchor / attached);
  return frame;
}

Eigen::MatrixXd node_jacobian(const KinematicChain& chain, const JointVector& q) {
  check_dims(chain, q, "node_jacobian");
  const int n = chain.n_dof();
  const int m = chain.n_nodes();
  const FrameData frames = compute_frames(chain, q);

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3 * m, n);
  for (int k = 0; k < m; ++k) {
    const int anchor = chain.node_anchors()[static_cast<std::size_t>(k)].joint;
    for (int j = 0; j <= anchor; ++j) {
      const Eigen::Vector3d arm =
          frames.nodes.col(k) - frames.origin[static_cast<std::size_t>(j)];
      J.block<3, 1>(3 * k, j) = frames.axis[static_cast<std::size_t>(j)].cross(arm);
    }
  }
  return J;
}

JointVector solve_ik(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                     const IkWeights& weights, const JointVector& q_init,
                     const IkOptions& options, IkReport* report) {
  check_dims(chain, q_init, "solve_ik");
  if (target.cols() != chain.n_nodes())
    throw std::invalid_argument("solve_ik: target node count != chain n_nodes");
  if (!target.allFinite()) throw std::invalid_argument("solve_ik: non-finite target");
  if (weights.size() != chain.n_nodes())
    throw std::invalid_argument("solve_ik: weight count != chain n_nodes");

  const JointVector q0 = chain.clamp(q_init);
  LocalSolve best = solve_from(chain, target, weights, q0, options);
  int restarts = 0;

  if (!best.converged && options.max_restarts > 0) {
    // Deterministic restart stream: pure function of the problem instance.
    std::uint64_t h = fnv1a(target.data(), sizeof(double) * 3 * target.cols());
    h = fnv1a_append(h, weights.lambdas().data(), sizeof(double) * weights.size());
    h = fnv1a_append(h, q0.data(), sizeof(double) * q0.size());
    Rng rng(h);
    for (int r = 0; r < options.max_restarts; ++r) {
      ++restarts;
      JointVector q_r = sample_feasible_config(chain, rng);
      LocalSolve alt = solve_from(chain, target, weights, q_r, options);
      const double diff = alt.objective - best.objective;
      const bool tie = std::abs(diff) < 1e-12;
      const bool closer = (alt.q - q0).norm() < (best.q - q0).norm();
      if (diff < -1e-12 || (tie && closer)) {
        best = alt;
      } else if (alt.converged && !best.converged && diff < 1e-12) {
        best = alt;
      }
      if (best.converged) break;
    }
  }

  if (report) {
    report->converged = best.converged;
    report->iterations = best.iterations;
    report->restarts = restarts;
    report->objective = best.objective;
    const Eigen::Matrix3Xd pos = compute_frames(chain, best.q).nodes;
    double mr = 0.0;
    for (Eigen::Index i = 0; i < pos.cols(); ++i) mr += (pos.col(i) - target.col(i)).norm();
    report->mean_residual = mr / static_cast<double>(pos.cols());
    report->objective_trace = best.trace;
  }
  return best.q;
}

double ik_error(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                const IkWeights& weights, const JointVector& q_init, const IkOptions& options) {
  IkReport rep;
  solve_ik(chain, target, weights, q_init, options, &rep);
  return rep.mean_residual;
}

bool node_state_feasible(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                         const IkWeights& weights, const JointVector& q_hint) {
  IkReport rep;
  const JointVector q = solve_ik(chain, target, weights, q_hint, {}, &rep);
  const Eigen::Matrix3Xd pos = forward_kinematics(chain, q).positions;
  for (Eigen::Index i = 0; i < pos.cols(); ++i) {
    if ((pos.col(i) - target.col(i)).norm() > kFeasibilityTol) return false;
  }
  return true;
}

JointVector sample_feasible_config(const KinematicChain& chain, Rng& rng) {
  const int n = chain.n_dof();
  JointVector q(n);
  for (int i = 0; i < n; ++i) q[i] = rng.uniform(chain.limits_min()[i], chain.limits_max()[i]);
  return q;
}

NodeSufficiencyReport validate_node_sufficiency(const KinematicChain& chain, int n_samples,
                                                std::uint64_t seed) {
  NodeSufficiencyReport rep;
  rep.n_samples = n_samples;
  rep.required_rank = chain.n_dof();
  Rng rng(seed);
  for (int s = 0; s < n_samples; ++s) {
    const JointVector q = sample_feasible_config(chain, rng);
    const Eigen::MatrixXd J = node_jacobian(chain, q);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& sv = svd.singularValues();
    int rank = 0;
    if (sv.size() > 0 && sv[0] > 0.0) {
      for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-6 * sv[0]) ++rank;
    }
    if (rank >= rep.required_rank)
      ++rep.full_rank_count;
    else
      rep.deficient_samples.push_back(q);
  }
  rep.fraction_full_rank =
      n_samples > 0 ? static_cast<double>(rep.full_rank_count) / n_samples : 0.0;
  rep.sufficient = rep.fraction_full_rank >= 0.99;
  return rep;
}

}  // namespace kadp
