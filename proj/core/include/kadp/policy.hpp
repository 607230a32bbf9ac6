// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Receding-horizon execution: observe the last T_o frames, sample a chunk
// of T_a actions from the trained denoiser, lift the first T_e of them to
// joint commands, step the environment, repeat. The node representation
// lifts through whole-body IK (exact at execution time); joint and
// end-effector baselines adapt their flat predictions per step.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/denoiser.hpp"
#include "kadp/diffusion.hpp"
#include "kadp/env.hpp"
#include "kadp/schedule.hpp"
#include "kadp/trainer.hpp"

namespace kadp {

// Gripper commands latch through a hysteresis band around 0.5 (width 0.1)
// so a channel hovering near the threshold cannot chatter the gripper.
inline constexpr double kGripperThreshold = 0.5;
inline constexpr double kGripperDeadband = 0.1;

// Next latched gripper bit given the continuous channel and the current bit.
bool gripper_bit(double value, bool closed);

struct PolicyConfig {
  int obs_frames = 2;  // T_o
  int horizon = 8;     // T_a
  int execute = 4;     // T_e, 1 <= T_e <= T_a

  // Must match the schedule the checkpoint was trained under.
  int schedule_steps = 100;
  ScheduleKind schedule_kind = ScheduleKind::kSquaredCosine;
  SampleOptions sampling;  // DDPM by default; DDIM with its step count

  Representation representation = Representation::kNode;
  bool constrained = true;  // kinematics-aware sampling (node only)

  // Node-subset view the model was trained on (indices into the
  // environment chain's nodes); empty means every node.
  std::vector<int> nodes;

  std::uint64_t episode_seed = 0;  // world randomness: reset and clouds
  std::uint64_t policy_seed = 0;   // diffusion sampling noise
};

struct EpisodeResult {
  bool success = false;
  bool collision = false;
  int steps = 0;                  // environment steps actually executed
  std::vector<double> ik_errors;  // one entry per executed step
  double wall_seconds = 0.0;

  double mean_ik_error() const;
};

// One action step adapted to a joint command. `ik_error` is the mean
// residual over the nodes the representation actually targets (zero for
// the joint representation, whose commands are feasible by construction);
// `feasible` flags residuals within the feasibility tolerance.
struct AdaptedStep {
  JointVector q;
  double gripper = 0.0;
  double ik_error = 0.0;
  bool feasible = true;
};

// Converts predicted action tokens (one column per step) into in-limit
// joint commands, warm-chaining each solve from the previous step:
// node tokens through whole-body IK, joint tokens by clamping, and
// end-effector tokens (position + two rotation columns) through an IK
// weighted only on the chain's last-joint nodes. Unreachable end-effector
// poses yield the best-effort minimizer with `feasible` cleared.
std::vector<AdaptedStep> adapt_action_tokens(Representation rep, const Eigen::MatrixXd& tokens,
                                             const KinematicChain& chain, const IkWeights& weights,
                                             const JointVector& q_prev);

// Rolls out the policy on one episode. The environment owns the full
// chain; `config.nodes` selects the trained view of it. Deterministic:
// fixed (model, episode seed, policy seed) reproduce the result bit for
// bit apart from wall time.
EpisodeResult run_episode(const Env& env, const DenoiserModel& model, const PolicyConfig& config);

// Replays a recorded demonstration through the execution path (reset from
// the demonstration's seed, recorded actions lifted by whole-body IK).
// Validates the loop plumbing: a successful demo must replay to success.
EpisodeResult replay_episode(const Env& env, const Demonstration& demo);

}  // namespace kadp
