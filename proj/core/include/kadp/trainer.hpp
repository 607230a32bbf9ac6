// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Behavior-cloning trainer for the conditional denoiser. The node
// representation trains against the kinematics-aware forward process
// (noise drawn in joint space through the MLP inverse-kinematics
// surrogate); the unconstrained ablation and the joint/end-effector
// baselines noise their flat action channels directly. One loop covers
// every variant, and a fixed seed reproduces it bitwise.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/dataset.hpp"
#include "kadp/denoiser.hpp"
#include "kadp/diffusion.hpp"
#include "kadp/ikmlp.hpp"
#include "kadp/schedule.hpp"

namespace kadp {

enum class Representation { kNode, kJoint, kEndEffector };

std::string representation_name(Representation rep);
Representation representation_from_name(const std::string& name);

// Channels per action step, gripper included: nodes 3m+1; joints n+1;
// end-effector 10 (gripper-frame position, two rotation columns, gripper).
int action_channels(Representation rep, const KinematicChain& chain);

// Copies of the demos with every node state restricted to the given
// columns; node-subset ablations train on these against the matching
// chain view.
std::vector<Demonstration> restrict_demo_nodes(const std::vector<Demonstration>& demos,
                                               const std::vector<int>& nodes);

// Per-step supervision tokens for the baselines. The end-effector encoding
// is the gripper-frame origin plus the first two columns of its rotation.
Eigen::VectorXd joint_action_token(const KinematicChain& chain, const JointVector& q,
                                   double gripper);
Eigen::VectorXd ee_action_token(const KinematicChain& chain, const JointVector& q,
                                double gripper);

// Windowed training set. `samples` keeps the node-space windows (the
// constrained forward process and the observation encoder both need
// them); `targets` holds one action_channels x horizon supervision matrix
// per sample. Joint and end-effector targets are recovered from the
// recorded node actions by exact whole-body IK, warm-chained through each
// demonstration so branch choices stay consistent.
struct TrainSet {
  std::vector<PolicySample> samples;
  std::vector<Eigen::MatrixXd> targets;
};

TrainSet prepare_train_set(const std::vector<Demonstration>& demos, const KinematicChain& chain,
                           Representation rep, int obs_frames, int horizon);

// One minibatch of the sample-prediction objective: per sample draws a
// uniform step k in {1..K} and standard-normal noise, forms A^k with the
// kinematics-aware forward process through `ik_mlp`, and scores the
// model's clean-chunk prediction by mean squared error over every node
// coordinate and gripper channel. Gradients (when requested) flow to the
// model parameters only. Draw order per sample: k, then the joint-space
// noise matrix, then the gripper noise vector.
double training_loss(const DenoiserModel& model, const NoiseSchedule& schedule,
                     const KinematicChain& chain, const NodeToJointMap& ik_mlp,
                     const std::vector<PolicySample>& batch, Rng& rng, DenoiserModel* grads);

// Variant-general minibatch loss over prepared targets. `constrained`
// requires node-representation targets and a non-null `ik_mlp`.
// Unconstrained variants diffuse in the model's normalized action space:
// xk = sqrt(abar^k) x0 + sqrt(1-abar^k) eps with one normal draw per
// channel, mapped back to real units for the model input.
double training_loss_on(const DenoiserModel& model, const NoiseSchedule& schedule,
                        const KinematicChain& chain, const NodeToJointMap* ik_mlp,
                        const TrainSet& set, const std::vector<int>& indices, bool constrained,
                        Rng& rng, DenoiserModel* grads);

struct TrainConfig {
  Representation representation = Representation::kNode;
  bool constrained = true;
  int obs_frames = 2;  // T_o
  int horizon = 8;     // T_a
  int schedule_steps = 100;
  ScheduleKind schedule_kind = ScheduleKind::kSquaredCosine;
  int epochs = 500;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double weight_decay = 1e-6;
  std::uint64_t seed = 1;

  // Backbone sizes. The data-dependent fields of the resulting
  // DenoiserConfig (node count, points per frame, horizons, action
  // channels) are filled in from the dataset and the representation.
  int width = 128;
  int cond_width = 128;
  int blocks = 4;
  int point_hidden = 64;
  int mlp_mult = 2;
  bool unet = false;

  // When set, receives the best-model checkpoint (model.bin), the training
  // log (loss.csv: epoch, loss, wall seconds), and a resume state
  // (train_state.bin) refreshed every `checkpoint_every` epochs. A run
  // interrupted between refreshes picks up from the last state and ends
  // with exactly the losses of an uninterrupted run.
  std::string run_dir;
  int checkpoint_every = 1;
  // Abort after this many epochs of the current invocation (0 = run to
  // `epochs`). Models an interruption; a later identical call resumes.
  int stop_after_epochs = 0;
};

struct TrainResult {
  DenoiserModel model;  // lowest-loss epoch
  std::vector<double> loss_curve;
  double best_loss = 0.0;
  int best_epoch = 0;  // 1-based
};

// Full training loop: one shuffled pass over the set per epoch, adaptive
// moments with decoupled weight decay, best-model tracking. `ik_mlp` may
// be null only for unconstrained variants; when given it must have been
// trained on `chain`. Normalization statistics for the model are fit from
// the training set before the first step.
TrainResult train_policy(const std::vector<Demonstration>& demos, const KinematicChain& chain,
                         const MlpIkModel* ik_mlp, const TrainConfig& config, Rng& rng);

}  // namespace kadp
