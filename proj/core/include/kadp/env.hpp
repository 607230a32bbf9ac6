// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/geometry.hpp"
#include "kadp/kinematics.hpp"
#include "kadp/rng.hpp"

namespace kadp {

enum class TaskId { kReach, kObstacleReach, kElbowPush, kPickAnalog };

std::string task_name(TaskId id);
TaskId task_from_name(const std::string& name);

// Fully describes one desk-scale task: the arm, the randomized object, any
// fixed obstacle geometry, success thresholds and observation parameters.
// Plain data — build one with make_task_spec and override fields as needed.
struct TaskSpec {
  TaskId id = TaskId::kReach;
  std::string chain_preset = "planar2";
  int max_steps = 60;
  int substeps = 10;           // collision checks per step along the motion
  double link_radius = 0.04;   // capsule radius around every link segment

  // The task's randomized object (reach/obstacle target marker, button,
  // ball) is placed uniformly in [range_lo, range_hi] at reset.
  Eigen::Vector3d range_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d range_hi = Eigen::Vector3d::Zero();
  double object_radius = 0.02;

  std::vector<Box> boxes;  // fixed collidable obstacles (also rendered)

  double success_radius = 0.03;    // reach-style goal tolerance
  double grasp_radius = 0.06;      // gripper-to-object attach distance
  double press_radius = 0.05;      // elbow-to-button press distance
  double finger_clearance = 0.10;  // fingers must stay this far off the button
  Eigen::Vector3d goal_center = Eigen::Vector3d::Zero();  // pick drop region
  double goal_radius = 0.05;

  JointVector home_q;
  std::vector<int> ee_nodes;  // nodes whose centroid is the gripper point
  int elbow_node = -1;        // pressing node (elbow-push only)

  int cloud_points = 256;       // P after farthest-point sampling
  int cloud_raw_samples = 2048; // surface samples before subsampling
  double cloud_sigma = 1e-3;    // isotropic Gaussian sensor noise (meters)

  double max_joint_step = 0.12;  // scripted-expert per-step joint cap (rad)
};

TaskSpec make_task_spec(TaskId id);
TaskSpec make_task_spec(const std::string& name);

std::string task_spec_to_json(const TaskSpec& spec);
TaskSpec parse_task_spec_json(const std::string& text);
TaskSpec load_task_spec(const std::string& path);
void save_task_spec(const TaskSpec& spec, const std::string& path);

struct WorldState {
  JointVector q;
  double gripper = 0.0;  // last commanded gripper value in [0, 1]
  Eigen::Vector3d object_center = Eigen::Vector3d::Zero();
  bool attached = false;   // object rigidly follows the gripper point
  bool pressed = false;    // latched button press (elbow-push)
  bool collision = false;  // latched; once set, motion stays frozen
  int step_count = 0;
};

// Greedy farthest-point subsampling to n points. The seed point is drawn
// from rng; when the input has at most n points they are returned verbatim.
// Empty input with n > 0 is an error.
Eigen::Matrix3Xd farthest_point_sample(const Eigen::Matrix3Xd& points, int n, Rng& rng);

// Capsule axes covering the arm at configuration q: consecutive joint-frame
// origins, the flange, and struts out to any nodes on the last joint.
std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> link_segments(
    const KinematicChain& chain, const JointVector& q);

// Desk-scale task environment. Stateless apart from the spec and chain —
// reset/step are pure functions of (state, inputs), so episodes are
// reproducible from their seed alone.
class Env {
 public:
  explicit Env(TaskSpec spec);

  const TaskSpec& spec() const { return spec_; }
  const KinematicChain& chain() const { return chain_; }

  WorldState reset(Rng& rng) const;

  // Teleport-style step: the arm moves from state.q toward `command` (which
  // must be inside joint limits) along a straight joint-space path checked
  // for collision at `substeps` interpolation points. A collision freezes
  // all motion permanently and latches the flag. The gripper command
  // attaches/releases the object in the pick task.
  WorldState step(const WorldState& state, const JointVector& command,
                  double gripper_command) const;

  // Surface-sampled point cloud of the scene objects (never the robot):
  // area-weighted raw samples, Gaussian noise, then farthest-point sampling
  // down to spec().cloud_points.
  Eigen::Matrix3Xd render_pointcloud(const WorldState& state, Rng& rng) const;

  bool check_success(const WorldState& state) const;

  // Robot proprioception: FK node positions plus the latched gripper value.
  NodeState proprio(const WorldState& state) const;

  // Centroid of the spec's ee_nodes at configuration q.
  Eigen::Vector3d ee_center(const JointVector& q) const;

  bool robot_collides(const JointVector& q) const;

 private:
  TaskSpec spec_;
  KinematicChain chain_;
};

struct DemoFrame {
  Eigen::Matrix3Xd cloud;  // 3 x P, observed before acting
  NodeState proprio;
  NodeState action;  // executed command, recorded through FK (feasible)
};

struct Demonstration {
  std::string task;
  std::uint64_t seed = 0;
  bool success = false;
  std::vector<DemoFrame> frames;
};

// Scripted demonstrator: plans waypoints in node space, tracks them with
// whole-body IK and records every executed step. Failed attempts (collision,
// step budget, missed goal) are retried with fresh randomness up to
// max_attempts times before throwing.
Demonstration scripted_expert(const Env& env, Rng& rng, int max_attempts = 10);

}  // namespace kadp
