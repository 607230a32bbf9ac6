// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Conditional sample-prediction network: maps (noised action chunk,
// observation, diffusion step) to a prediction of the clean chunk. The
// observation encoder pools per-point features per frame; conditioning
// enters the backbone through cross-attention from chunk tokens to
// per-frame condition tokens; the diffusion step enters through a
// sinusoidal embedding added per block.
//
// All forward/backward passes are hand-written. Batches stack tokens
// column-wise: activations are (feature x B*T) with sample-major column
// order.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kadp/chain.hpp"
#include "kadp/diffusion.hpp"
#include "kadp/nn.hpp"

namespace kadp {

class Rng;

// One policy observation: T_o frames of downsampled scene points plus the
// robot's own node states, oldest frame first. History at episode start is
// padded by repeating the first frame.
struct Obs {
  std::vector<Eigen::Matrix3Xd> point_sets;  // each 3 x P
  std::vector<NodeState> proprio;            // length T_o
  int t_index = 0;
};

struct DenoiserConfig {
  int n_nodes = 8;
  int horizon = 8;     // T_a
  int obs_frames = 2;  // T_o
  int points = 256;    // P per frame
  int width = 128;
  int cond_width = 128;
  int blocks = 4;
  int point_hidden = 64;
  int mlp_mult = 2;
  bool unet = false;  // 1D U-Net backbone instead of the flat residual stack
  // Baseline representations (joint-space, end-effector) carry a different
  // number of channels per action step; 0 keeps the node default.
  int action_override = 0;

  int token_dim() const { return action_override > 0 ? action_override : 3 * n_nodes + 1; }
  // Proprioception is always the node representation, whatever the actions are.
  int proprio_dim() const { return 3 * n_nodes + 1; }
  std::uint64_t hash() const;
};

// Residual transformer-style block: step injection, temporal convolution
// (kernel 3, zero padded, never mixing samples), single-head cross-attention
// to the condition tokens, and a feed-forward sublayer. Pre-norm throughout.
struct DenoiserBlock {
  LayerNorm ln1, ln2, ln3;
  Linear step_proj;                     // emb width -> w
  Linear conv;                          // 3w -> w
  Linear attn_q, attn_k, attn_v, attn_o;
  Linear mlp1, mlp2;

  DenoiserBlock() = default;
  DenoiserBlock(int w, int cond_width, int emb_width, int mlp_mult);
  void init(Rng& rng);
  void collect(ParamList& out);

  struct Cache {
    Eigen::MatrixXd x_in;
    LayerNorm::Cache c1, c2, c3;
    Eigen::MatrixXd t1, shifted, t2, q, k, v, attn, y, t3, m1pre, m1post;
  };
  // x: w x B*T; cond: cond_width x B*T_o; emb: emb_width x B.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& cond, const Eigen::MatrixXd& emb,
                          int batch, int tokens, int cond_tokens, Cache& cache) const;
  // Returns dL/dx; accumulates into grad, d_cond, d_emb.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& cond, const Eigen::MatrixXd& emb,
                           int batch, int tokens, int cond_tokens, const Cache& cache, DenoiserBlock& grad,
                           Eigen::MatrixXd& d_cond, Eigen::MatrixXd& d_emb) const;
};

struct DenoiserModel {
  DenoiserConfig config;

  Linear p1, p2, cproj;  // point encoder + condition projection
  Linear e1, e2;         // step-embedding MLP
  Linear token_in;
  std::vector<DenoiserBlock> blocks;  // flat stack, or {enc, mid, dec} for unet
  Linear down, up, fuse;              // unet only
  LayerNorm ln_f;
  Linear head;  // zero-initialized

  // Real-unit <-> model-space normalization; identity on a fresh model.
  Eigen::VectorXd act_mean, act_scale;    // token_dim
  Eigen::VectorXd prop_mean, prop_scale;  // proprio_dim
  Eigen::Vector3d point_mean, point_scale;

  std::uint64_t chain_hash = 0;
  std::uint64_t ikmlp_hash = 0;

  ParamList params();
  std::uint64_t weights_hash() const;
};

DenoiserModel make_denoiser(const DenoiserConfig& config, Rng& rng);

// Per-frame condition tokens (cond_width x T_o). Deterministic; permutation-
// and duplication-invariant over the points within each frame.
Eigen::MatrixXd encode_observation(const DenoiserModel& model, const Obs& obs);

// Column t holds action step t: node coordinates column-major, gripper last.
// Baseline representations pack their own per-step channels the same way.
Eigen::MatrixXd chunk_to_tokens(const ActionChunk& chunk, int n_nodes);
ActionChunk tokens_to_chunk(const Eigen::MatrixXd& tokens, int n_nodes);

// Unconstrained real-valued prediction of the clean chunk; feasibility is
// enforced downstream by the diffusion lift, not here.
ActionChunk predict_sample(const DenoiserModel& model, const ActionChunk& noised,
                           const Eigen::MatrixXd& cond, int k);

// Raw-token variant (token_dim x T_a), usable with any action representation.
Eigen::MatrixXd predict_tokens(const DenoiserModel& model, const Eigen::MatrixXd& noised,
                               const Eigen::MatrixXd& cond, int k);

// A prepared training batch, everything in real units.
struct DenoiserBatch {
  Eigen::MatrixXd noised;   // token_dim x B*T_a
  Eigen::MatrixXd target;   // token_dim x B*T_a
  Eigen::MatrixXd points;   // 3 x B*T_o*P
  Eigen::MatrixXd proprio;  // proprio_dim x B*T_o
  Eigen::VectorXd steps;    // B diffusion step indices
};

// Mean squared error between the prediction and the target over every node
// coordinate and gripper channel. When `grads` is non-null, accumulates
// d(loss)/d(parameters) into it (shape clone of the model).
double denoiser_loss(const DenoiserModel& model, const DenoiserBatch& batch, DenoiserModel* grads);

// Versioned binary checkpoint ("KADPDN01").
void save_denoiser(const DenoiserModel& model, const std::string& path);
DenoiserModel load_denoiser(const std::string& path);

}  // namespace kadp
