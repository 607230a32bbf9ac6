// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/kinematics.hpp"
#include "kadp/rng.hpp"
#include "kadp/schedule.hpp"

namespace kadp {

// A horizon of T_a consecutive node-space actions. Gripper channels hold
// continuous values in [0, 1] while chunks are being diffused; execution
// thresholds them.
struct ActionChunk {
  std::vector<NodeState> steps;

  int length() const { return static_cast<int>(steps.size()); }
};

// Joint-space lift of an ActionChunk: per-step joint vectors (within
// limits) plus the gripper diffusion scalars. The gripper values are kept
// unclamped here so the linear schedule recurrences stay exact; the
// ActionChunk view clamps them into [0, 1].
struct JointChunk {
  std::vector<JointVector> q;
  Eigen::VectorXd gripper;

  int length() const { return static_cast<int>(q.size()); }
};

// Node-to-joint map used by the diffusion lifts. `hint` supports warm
// starts; maps without that notion (the MLP surrogate) ignore it.
using NodeToJointMap =
    std::function<JointVector(const Eigen::Matrix3Xd& nodes, const JointVector& hint)>;

// NodeToJointMap backed by the optimization-based solver.
NodeToJointMap exact_ik_map(const KinematicChain& chain, const IkWeights& weights,
                            const IkOptions& options = {});

// Flattening order: per chunk step, node coordinates column-major
// (x0,y0,z0,x1,...) followed by the gripper value; steps concatenated.
Eigen::VectorXd flatten_chunk(const ActionChunk& chunk);
ActionChunk unflatten_chunk(const Eigen::VectorXd& flat, int n_nodes);

// Lifts every chunk step through `ik`, warm-starting each solve from the
// previous step's result (or from `hints` when given). Also copies the
// gripper channel.
JointChunk lift_chunk(const NodeToJointMap& ik, const ActionChunk& chunk,
                      const JointVector& start_hint, const JointChunk* hints = nullptr);

// FK projection of a joint chunk (clamping each step to the limits first);
// gripper values are clamped into [0, 1] on the chunk side.
ActionChunk project_chunk(const KinematicChain& chain, const JointChunk& lifted);

struct NoisedChunk {
  ActionChunk chunk;   // projected, kinematically feasible by construction
  JointChunk lifted;   // the joint-space variable behind it (clamped)
};

// Forward noising: lift the clean chunk, blend toward Gaussian noise in
// joint space (sqrt(abar^k) q0 + sqrt(1-abar^k) eps per step), project back
// through FK. Gripper channels are noised with the same schedule but bypass
// the lift. `eps` is n x T_a (one column per chunk step), `eps_gripper` has
// T_a entries. k = 0 is the identity limit (returns F_fk(F_ik(a0))).
NoisedChunk forward_noise(const NoiseSchedule& schedule, const KinematicChain& chain,
                          const NodeToJointMap& ik, const ActionChunk& a0, int k,
                          const Eigen::MatrixXd& eps, const Eigen::VectorXd& eps_gripper,
                          const JointVector* hint = nullptr);

// Posterior mean mu_tilde^k = c0^k q0 + ck^k qk (applied to joints and
// gripper alike) with its variance beta_tilde^k. Pure arithmetic.
std::pair<JointChunk, double> posterior_mean(const NoiseSchedule& schedule, const JointChunk& q0,
                                             const JointChunk& qk, int k);

struct ReverseStepResult {
  ActionChunk chunk;   // A^{k-1}
  JointChunk lifted;   // its joint-space variable (exact, reusable as cache)
  JointChunk q0_lift;  // the lift of a0_hat (reusable as the next warm start)
};

// One reverse DDPM step: A^{k-1} = F_fk(mu_tilde^k(a0_hat, ak) + sqrt(beta_tilde^k) z).
// `qk_cache` skips re-lifting ak (the sampler already knows the exact lift it
// projected from); `q0_hint` warm-starts the a0_hat lift. The k = 1 step is
// noise-free (beta_tilde^1 = 0).
ReverseStepResult reverse_step(const NoiseSchedule& schedule, const KinematicChain& chain,
                               const NodeToJointMap& ik, const ActionChunk& ak,
                               const ActionChunk& a0_hat, int k, const Eigen::MatrixXd& z,
                               const Eigen::VectorXd& z_gripper,
                               const JointChunk* qk_cache = nullptr,
                               const JointChunk* q0_hint = nullptr);

// One deterministic (eta = 0) DDIM hop k -> k_prev, defined in joint space:
// eps_hat = (qk - sqrt(abar^k) q0) / sqrt(1 - abar^k), then
// x = sqrt(abar^k_prev) q0 + sqrt(1 - abar^k_prev) eps_hat, projected by FK.
// k_prev = 0 returns F_fk(q0) exactly.
ReverseStepResult ddim_step(const NoiseSchedule& schedule, const KinematicChain& chain,
                            const NodeToJointMap& ik, const ActionChunk& ak,
                            const ActionChunk& a0_hat, int k, int k_prev,
                            const JointChunk* qk_cache = nullptr,
                            const JointChunk* q0_hint = nullptr);

// Denoiser interface used by the samplers: predicted clean chunk given the
// current noised chunk and step index.
using DenoiseFn = std::function<ActionChunk(const ActionChunk& ak, int k)>;

enum class SamplerKind { kDdpm, kDdim };

struct SampleOptions {
  SamplerKind sampler = SamplerKind::kDdpm;
  int ddim_steps = 10;
};

// Full constrained sampling chain (Gaussian start in joint space, then
// reverse_step or ddim_step down to k = 0). Every emitted chunk, including
// the result, is in the image of F_fk by construction.
ActionChunk sample_action_chunk(const NoiseSchedule& schedule, const KinematicChain& chain,
                                const NodeToJointMap& ik, const DenoiseFn& denoise, int horizon,
                                Rng& rng, const SampleOptions& options = {});

// Denoiser interface for the unconstrained path: both vectors live in the
// caller's (typically z-scored) flat coordinate space.
using DenoiseVecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& xk, int k)>;

// Plain DDPM/DDIM sampling on a flat vector, no kinematic lift. This is the
// `--no-kc` ablation path and the sampler for the joint/end-effector
// baseline representations.
Eigen::VectorXd sample_vector(const NoiseSchedule& schedule, const DenoiseVecFn& denoise,
                              Eigen::Index dim, Rng& rng, const SampleOptions& options = {});

}  // namespace kadp
