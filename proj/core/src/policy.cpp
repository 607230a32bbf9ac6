// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/policy.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "kadp/kinematics.hpp"

namespace kadp {

namespace {

// Right-handed frame from a noisy two-column encoding: normalize the first
// column, Gram-Schmidt the second, cross for the third. Degenerate inputs
// fall back to fixed axes so the adapter stays deterministic and total.
Eigen::Matrix3d orthonormal_frame(Eigen::Vector3d a, Eigen::Vector3d b) {
  if (a.norm() < 1e-9) a = Eigen::Vector3d::UnitX();
  a.normalize();
  Eigen::Vector3d c = b - a.dot(b) * a;
  if (c.norm() < 1e-9) {
    const Eigen::Vector3d alt =
        std::abs(a.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    c = alt - a.dot(alt) * a;
  }
  c.normalize();
  Eigen::Matrix3d r;
  r.col(0) = a;
  r.col(1) = c;
  r.col(2) = a.cross(c);
  return r;
}

// Warm-started solve with one deterministic fallback: a warm start that
// settles in a distant local minimum on a reachable target gets a second
// solve from the mid-limits configuration, and the better result wins.
// Genuinely unreachable targets keep their best-effort residual.
JointVector solve_with_fallback(const KinematicChain& chain, const Eigen::Matrix3Xd& target,
                                const IkWeights& weights, const JointVector& warm,
                                IkReport& report) {
  JointVector q = solve_ik(chain, target, weights, warm, {}, &report);
  if (report.mean_residual > kFeasibilityTol) {
    IkReport retry;
    JointVector q2 = solve_ik(chain, target, weights, chain.mid_config(), {}, &retry);
    if (retry.objective < report.objective) {
      q = std::move(q2);
      report = retry;
    }
  }
  return q;
}

NodeState select_nodes(const NodeState& s, const std::vector<int>& nodes) {
  if (nodes.empty()) return s;
  NodeState out;
  out.positions.resize(3, static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i)
    out.positions.col(static_cast<Eigen::Index>(i)) = s.positions.col(nodes[i]);
  out.gripper = s.gripper;
  return out;
}

Eigen::MatrixXd to_real(const DenoiserModel& model, const Eigen::MatrixXd& z) {
  return ((z.array().colwise() * model.act_scale.array()).colwise() + model.act_mean.array())
      .matrix();
}

Eigen::MatrixXd to_normalized(const DenoiserModel& model, const Eigen::MatrixXd& x) {
  return ((x.colwise() - model.act_mean).array().colwise() / model.act_scale.array()).matrix();
}

}  // namespace

bool gripper_bit(double value, bool closed) {
  const double half = 0.5 * kGripperDeadband;
  if (closed) return value > kGripperThreshold - half;
  return value >= kGripperThreshold + half;
}

double EpisodeResult::mean_ik_error() const {
  if (ik_errors.empty()) return 0.0;
  double sum = 0.0;
  for (double e : ik_errors) sum += e;
  return sum / static_cast<double>(ik_errors.size());
}

std::vector<AdaptedStep> adapt_action_tokens(Representation rep, const Eigen::MatrixXd& tokens,
                                             const KinematicChain& chain, const IkWeights& weights,
                                             const JointVector& q_prev) {
  const int n = chain.n_dof();
  const int m = chain.n_nodes();
  if (tokens.rows() != action_channels(rep, chain))
    throw std::invalid_argument("adapt_action_tokens: token rows do not match the representation");
  if (weights.size() != m)
    throw std::invalid_argument("adapt_action_tokens: weight count does not match the chain");
  if (q_prev.size() != n)
    throw std::invalid_argument("adapt_action_tokens: warm start has the wrong dof");

  // The end-effector encoding targets the nodes rigid to the last joint.
  std::vector<int> tool;
  Eigen::Vector3d mean_anchor = Eigen::Vector3d::Zero();
  if (rep == Representation::kEndEffector) {
    for (int i = 0; i < m; ++i) {
      if (chain.node_anchors()[static_cast<std::size_t>(i)].joint == n - 1) {
        tool.push_back(i);
        mean_anchor += chain.node_anchors()[static_cast<std::size_t>(i)].offset;
      }
    }
    if (tool.empty())
      throw std::invalid_argument("adapt_action_tokens: chain has no last-joint nodes");
    mean_anchor /= static_cast<double>(tool.size());
  }

  std::vector<AdaptedStep> out;
  out.reserve(static_cast<std::size_t>(tokens.cols()));
  JointVector warm = q_prev;
  for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
    const Eigen::VectorXd token = tokens.col(t);
    AdaptedStep step;
    switch (rep) {
      case Representation::kNode: {
        const Eigen::Matrix3Xd target =
            Eigen::Map<const Eigen::Matrix3Xd>(token.data(), 3, m);
        IkReport report;
        step.q = solve_with_fallback(chain, target, weights, warm, report);
        step.ik_error = report.mean_residual;
        step.feasible = step.ik_error <= kFeasibilityTol;
        step.gripper = token[3 * m];
        break;
      }
      case Representation::kJoint: {
        const JointVector q = token.head(n);
        step.q = chain.clamp(q);
        step.ik_error = 0.0;
        step.feasible = chain.within_limits(q, 1e-9);
        step.gripper = token[n];
        break;
      }
      case Representation::kEndEffector: {
        const Eigen::Vector3d p = token.head(3);
        const Eigen::Matrix3d r = orthonormal_frame(token.segment(3, 3), token.segment(6, 3));
        Eigen::Matrix3Xd target = Eigen::Matrix3Xd::Zero(3, m);
        Eigen::VectorXd lambdas = Eigen::VectorXd::Zero(m);
        for (int i : tool) {
          target.col(i) =
              p + r * (chain.node_anchors()[static_cast<std::size_t>(i)].offset - mean_anchor);
          lambdas[i] = 1.0;
        }
        IkReport report;
        step.q = solve_with_fallback(chain, target, IkWeights(lambdas), warm, report);
        // Residual over the targeted nodes only; the rest are unconstrained.
        const NodeState fk = forward_kinematics(chain, step.q);
        double err = 0.0;
        for (int i : tool) err += (fk.positions.col(i) - target.col(i)).norm();
        step.ik_error = err / static_cast<double>(tool.size());
        step.feasible = step.ik_error <= kFeasibilityTol;
        step.gripper = token[9];
        break;
      }
    }
    warm = step.q;
    out.push_back(std::move(step));
  }
  return out;
}

EpisodeResult run_episode(const Env& env, const DenoiserModel& model, const PolicyConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  if (config.obs_frames < 1 || config.horizon < 1 || config.execute < 1 ||
      config.execute > config.horizon)
    throw std::invalid_argument("run_episode: need T_o >= 1 and 1 <= T_e <= T_a");
  if (config.schedule_steps < 1)
    throw std::invalid_argument("run_episode: schedule_steps must be >= 1");
  if (config.constrained && config.representation != Representation::kNode)
    throw std::invalid_argument("run_episode: constrained sampling applies to the node representation");

  const KinematicChain view =
      config.nodes.empty() ? env.chain() : env.chain().with_node_subset(config.nodes);
  const IkWeights weights = config.nodes.empty()
                                ? default_ik_weights(env.chain())
                                : default_ik_weights(env.chain()).subset(config.nodes);
  const int m = view.n_nodes();

  if (model.config.horizon != config.horizon || model.config.obs_frames != config.obs_frames)
    throw std::invalid_argument("run_episode: model horizons do not match the policy configuration");
  if (model.config.points != env.spec().cloud_points)
    throw std::invalid_argument("run_episode: model point count does not match the task");
  if (model.config.token_dim() != action_channels(config.representation, view) ||
      (config.representation == Representation::kNode &&
       (model.config.n_nodes != m || model.config.action_override != 0)) ||
      model.config.proprio_dim() != 3 * m + 1)
    throw std::invalid_argument("run_episode: model channels do not match the representation");
  if (model.chain_hash != 0 && model.chain_hash != view.hash())
    throw std::invalid_argument("run_episode: model was trained on a different chain (hash mismatch)");

  const NoiseSchedule schedule = make_schedule(config.schedule_steps, config.schedule_kind);
  const NodeToJointMap ik_map = exact_ik_map(view, weights);
  const int token = model.config.token_dim();
  const int T = config.horizon;

  Rng episode_rng(config.episode_seed);
  Rng policy_rng(config.policy_seed);
  WorldState state = env.reset(episode_rng);
  JointVector q_prev = state.q;
  bool closed = state.gripper >= 0.5;

  std::vector<Eigen::Matrix3Xd> clouds;
  std::vector<NodeState> props;
  auto observe = [&]() {
    clouds.push_back(env.render_pointcloud(state, episode_rng));
    props.push_back(select_nodes(env.proprio(state), config.nodes));
  };
  auto window = [&]() {
    Obs obs;
    const int have = static_cast<int>(clouds.size());
    for (int i = config.obs_frames - 1; i >= 0; --i) {
      const int idx = std::max(0, have - 1 - i);  // repeat the first frame
      obs.point_sets.push_back(clouds[static_cast<std::size_t>(idx)]);
      obs.proprio.push_back(props[static_cast<std::size_t>(idx)]);
    }
    obs.t_index = state.step_count;
    return obs;
  };

  EpisodeResult result;
  std::vector<AdaptedStep> chunk;
  std::size_t cursor = 0;
  bool done = false;
  while (!done && state.step_count < env.spec().max_steps) {
    observe();
    if (cursor == chunk.size()) {
      const Obs obs = window();
      const Eigen::MatrixXd cond = encode_observation(model, obs);
      Eigen::MatrixXd tokens;
      if (config.representation == Representation::kNode && config.constrained) {
        const DenoiseFn denoise = [&](const ActionChunk& ak, int k) {
          return predict_sample(model, ak, cond, k);
        };
        tokens = chunk_to_tokens(
            sample_action_chunk(schedule, view, ik_map, denoise, T, policy_rng, config.sampling),
            m);
      } else {
        // Flat diffusion in the model's normalized action space, exactly as
        // trained; tokens return to real units afterwards.
        const DenoiseVecFn denoise = [&](const Eigen::VectorXd& xk, int k) {
          const Eigen::MatrixXd zk = Eigen::Map<const Eigen::MatrixXd>(xk.data(), token, T);
          const Eigen::MatrixXd z0 = to_normalized(model, predict_tokens(model, to_real(model, zk), cond, k));
          return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(z0.data(), z0.size()));
        };
        const Eigen::VectorXd flat =
            sample_vector(schedule, denoise, static_cast<Eigen::Index>(token) * T, policy_rng,
                          config.sampling);
        tokens = to_real(model, Eigen::Map<const Eigen::MatrixXd>(flat.data(), token, T));
      }
      chunk = adapt_action_tokens(config.representation, tokens.leftCols(config.execute), view,
                                  weights, q_prev);
      cursor = 0;
    }
    const AdaptedStep& step = chunk[cursor++];
    closed = gripper_bit(step.gripper, closed);
    state = env.step(state, step.q, closed ? 1.0 : 0.0);
    result.ik_errors.push_back(step.ik_error);
    q_prev = step.q;
    if (state.collision) {
      result.collision = true;
      done = true;
    } else if (env.check_success(state)) {
      result.success = true;
      done = true;
    }
  }

  result.steps = state.step_count;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

EpisodeResult replay_episode(const Env& env, const Demonstration& demo) {
  const auto t_start = std::chrono::steady_clock::now();
  const KinematicChain& chain = env.chain();
  const IkWeights weights = default_ik_weights(chain);

  Rng episode_rng(demo.seed);
  WorldState state = env.reset(episode_rng);
  JointVector q_prev = state.q;

  EpisodeResult result;
  for (const DemoFrame& f : demo.frames) {
    if (state.step_count >= env.spec().max_steps) break;
    IkReport report;
    const JointVector q = solve_ik(chain, f.action.positions, weights, q_prev, {}, &report);
    state = env.step(state, q, f.action.gripper);
    result.ik_errors.push_back(report.mean_residual);
    q_prev = q;
    if (state.collision) {
      result.collision = true;
      break;
    }
    if (env.check_success(state)) {
      result.success = true;
      break;
    }
  }

  result.steps = state.step_count;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace kadp
