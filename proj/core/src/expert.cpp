// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kadp/env.hpp"
#include "kadp/kinematics.hpp"

namespace kadp {

namespace {

// One waypoint of a scripted plan: node-space targets tracked by whole-body
// IK, a gripper command, and optional hold steps after arrival.
struct Phase {
  Eigen::Matrix3Xd target;
  Eigen::VectorXd weights;
  double gripper = 0.0;
  int dwell = 0;
};

// Targets that pin the tool pose of the srs7 arm: wrist center 0.2 m behind
// the gripper point p along the approach direction, fingers straddling p
// along finger_axis. Unweighted nodes keep filler positions.
Eigen::Matrix3Xd tool_targets(const Eigen::Matrix3Xd& filler, const Eigen::Vector3d& p,
                              const Eigen::Vector3d& approach,
                              const Eigen::Vector3d& finger_axis) {
  Eigen::Matrix3Xd t = filler;
  t.col(5) = p - 0.2 * approach;
  t.col(6) = p + 0.05 * finger_axis;
  t.col(7) = p - 0.05 * finger_axis;
  return t;
}

Eigen::VectorXd tool_weights(int m, double wrist, double finger) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
  w[5] = wrist;
  w[6] = finger;
  w[7] = finger;
  return w;
}

std::vector<Phase> plan_phases(const Env& env, const WorldState& start) {
  const TaskSpec& spec = env.spec();
  const Eigen::Vector3d obj = start.object_center;
  const Eigen::Matrix3Xd filler = env.proprio(start).positions;
  const int m = static_cast<int>(filler.cols());

  std::vector<Phase> phases;
  switch (spec.id) {
    case TaskId::kReach: {
      Eigen::Matrix3Xd t = filler;
      t.col(1) = obj;
      Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
      w[1] = 1.0;
      phases.push_back({t, w, 0.0, 2});
      break;
    }
    case TaskId::kObstacleReach: {
      // Drop in front of the wall with the tool pitched 20 degrees down,
      // then slide through the slot to the target.
      const Eigen::Vector3d approach(std::cos(0.35), 0.0, -std::sin(0.35));
      const Eigen::Vector3d fy(0, 1, 0);
      const Eigen::VectorXd w = tool_weights(m, 1.0, 1.0);
      auto at = [&](const Eigen::Vector3d& p) {
        return tool_targets(filler, p, approach, fy);
      };
      phases.push_back({at({0.40, obj.y(), 0.58}), w, 0.0, 0});
      phases.push_back({at({0.48, obj.y(), 0.46}), w, 0.0, 0});
      phases.push_back({at({0.64, obj.y(), obj.z()}), w, 0.0, 0});
      phases.push_back({at(obj), w, 0.0, 2});
      break;
    }
    case TaskId::kElbowPush: {
      // Press with the forearm pad while the wrist (and with it the fingers)
      // swings up, back and to the opposite side of the button.
      const Eigen::Vector3d shoulder(0, 0, 0.333);
      const Eigen::Vector3d outward = (obj - shoulder).normalized();
      const double sy = obj.y() >= 0.0 ? 1.0 : -1.0;
      const Eigen::Vector3d up = Eigen::Vector3d(-0.30, -0.60 * sy, 0.75).normalized();
      const Eigen::Vector3d wrist_keep = obj + 0.384 * up;
      const Eigen::Vector3d away = (wrist_keep - obj).normalized();
      Eigen::Vector3d finger_axis = away.cross(Eigen::Vector3d::UnitZ());
      if (finger_axis.norm() < 1e-6) finger_axis = Eigen::Vector3d::UnitX();
      finger_axis.normalize();

      auto targets = [&](const Eigen::Vector3d& elbow_to) {
        Eigen::Matrix3Xd t =
            tool_targets(filler, wrist_keep + 0.2 * away, away, finger_axis);
        t.col(spec.elbow_node) = elbow_to;
        return t;
      };
      Eigen::VectorXd w = tool_weights(m, 0.3, 0.3);
      w[spec.elbow_node] = 1.0;
      phases.push_back({targets(obj + 0.08 * outward), w, 0.0, 0});
      phases.push_back({targets(obj), w, 0.0, 2});
      phases.push_back({targets(obj + 0.10 * outward), w, 0.0, 0});
      break;
    }
    case TaskId::kPickAnalog: {
      // Top grasp: descend on the ball, close, carry, release over the goal.
      const Eigen::Vector3d down(0, 0, -1), fx(1, 0, 0);
      const Eigen::Vector3d lift(0, 0, 0.15), hover(0, 0, 0.12), drop(0, 0, 0.02);
      const Eigen::Vector3d goal = spec.goal_center;
      const Eigen::VectorXd w = tool_weights(m, 1.0, 1.0);
      auto at = [&](const Eigen::Vector3d& p) { return tool_targets(filler, p, down, fx); };
      phases.push_back({at(obj + hover), w, 0.0, 0});
      phases.push_back({at(obj), w, 0.0, 1});
      phases.push_back({at(obj), w, 1.0, 3});
      phases.push_back({at(obj + lift), w, 1.0, 0});
      phases.push_back({at(goal + lift), w, 1.0, 0});
      phases.push_back({at(goal + drop), w, 1.0, 1});
      phases.push_back({at(goal + drop), w, 0.0, 3});
      phases.push_back({at(goal + lift), w, 0.0, 0});
      break;
    }
  }
  return phases;
}

}  // namespace

Demonstration scripted_expert(const Env& env, Rng& rng, int max_attempts) {
  if (max_attempts < 1) throw std::invalid_argument("scripted_expert: max_attempts < 1");
  const KinematicChain& chain = env.chain();
  const TaskSpec& spec = env.spec();

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t episode_seed = rng.next_u64();
    Rng ep_rng(episode_seed);
    WorldState state = env.reset(ep_rng);

    Demonstration demo;
    demo.task = task_name(spec.id);
    demo.seed = episode_seed;

    bool failed = false;
    JointVector q_goal = state.q;
    auto act = [&](const JointVector& cmd, double gripper) {
      if (state.step_count >= spec.max_steps) {
        failed = true;
        return;
      }
      DemoFrame frame;
      frame.cloud = env.render_pointcloud(state, ep_rng);
      frame.proprio = env.proprio(state);
      frame.action = forward_kinematics(chain, cmd, gripper);
      demo.frames.push_back(std::move(frame));
      state = env.step(state, cmd, gripper);
      if (state.collision) failed = true;
    };

    // Waypoint IK with collision-aware restarts: a solution that parks the
    // arm inside an obstacle is rejected and re-solved from a random start.
    auto solve_waypoint = [&](const Eigen::Matrix3Xd& target, const Eigen::VectorXd& weights,
                              const JointVector& warm) {
      JointVector q = solve_ik(chain, target, IkWeights(weights), warm);
      for (int t = 0; t < 15 && env.robot_collides(q); ++t)
        q = solve_ik(chain, target, IkWeights(weights),
                     ep_rng.uniform_vector(chain.limits_min(), chain.limits_max()));
      return q;
    };

    for (const Phase& phase : plan_phases(env, state)) {
      q_goal = solve_waypoint(phase.target, phase.weights, q_goal);
      while (!failed) {
        const JointVector delta = q_goal - state.q;
        if (delta.cwiseAbs().maxCoeff() <= 1e-9) break;
        const JointVector cmd =
            state.q + delta.cwiseMax(-spec.max_joint_step).cwiseMin(spec.max_joint_step);
        act(cmd, phase.gripper);
      }
      for (int d = 0; d < phase.dwell && !failed; ++d) act(q_goal, phase.gripper);
      if (failed) break;
    }

    if (!failed && env.check_success(state)) {
      demo.success = true;
      return demo;
    }
  }
  throw std::runtime_error("scripted_expert: no success in " + std::to_string(max_attempts) +
                           " attempts on task " + task_name(spec.id));
}

}  // namespace kadp
