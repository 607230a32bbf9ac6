// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace kadp {

namespace {

double clamp01(double g) { return std::min(1.0, std::max(0.0, g)); }

void check_step(const NoiseSchedule& s, int k, const char* who, int k_min = 1) {
  if (k < k_min || k > s.K)
    throw std::invalid_argument(std::string(who) + ": step index out of range");
}

void check_noise(const KinematicChain& chain, int horizon, const Eigen::MatrixXd& eps,
                 const Eigen::VectorXd& eps_gripper, const char* who) {
  if (eps.rows() != chain.n_dof() || eps.cols() != horizon)
    throw std::invalid_argument(std::string(who) + ": noise must be n_dof x horizon");
  if (eps_gripper.size() != horizon)
    throw std::invalid_argument(std::string(who) + ": gripper noise must have horizon entries");
}

}  // namespace

NodeToJointMap exact_ik_map(const KinematicChain& chain, const IkWeights& weights,
                            const IkOptions& options) {
  return [&chain, weights, options](const Eigen::Matrix3Xd& nodes, const JointVector& hint) {
    return solve_ik(chain, nodes, weights, hint, options);
  };
}

Eigen::VectorXd flatten_chunk(const ActionChunk& chunk) {
  if (chunk.steps.empty()) return {};
  const Eigen::Index m = chunk.steps.front().positions.cols();
  const Eigen::Index per_step = 3 * m + 1;
  Eigen::VectorXd flat(per_step * chunk.length());
  for (int t = 0; t < chunk.length(); ++t) {
    const NodeState& s = chunk.steps[static_cast<std::size_t>(t)];
    flat.segment(t * per_step, 3 * m) =
        Eigen::Map<const Eigen::VectorXd>(s.positions.data(), 3 * m);
    flat[t * per_step + 3 * m] = s.gripper;
  }
  return flat;
}

ActionChunk unflatten_chunk(const Eigen::VectorXd& flat, int n_nodes) {
  const Eigen::Index per_step = 3 * n_nodes + 1;
  if (per_step <= 0 || flat.size() % per_step != 0)
    throw std::invalid_argument("unflatten_chunk: size is not a multiple of 3m + 1");
  ActionChunk chunk;
  chunk.steps.resize(static_cast<std::size_t>(flat.size() / per_step));
  for (int t = 0; t < chunk.length(); ++t) {
    NodeState& s = chunk.steps[static_cast<std::size_t>(t)];
    s.positions =
        Eigen::Map<const Eigen::Matrix3Xd>(flat.data() + t * per_step, 3, n_nodes);
    s.gripper = flat[t * per_step + 3 * n_nodes];
  }
  return chunk;
}

JointChunk lift_chunk(const NodeToJointMap& ik, const ActionChunk& chunk,
                      const JointVector& start_hint, const JointChunk* hints) {
  JointChunk lifted;
  lifted.q.resize(chunk.steps.size());
  lifted.gripper.resize(chunk.length());
  JointVector carry = start_hint;
  for (int t = 0; t < chunk.length(); ++t) {
    const JointVector& hint = hints ? hints->q[static_cast<std::size_t>(t)] : carry;
    lifted.q[static_cast<std::size_t>(t)] = ik(chunk.steps[static_cast<std::size_t>(t)].positions, hint);
    carry = lifted.q[static_cast<std::size_t>(t)];
    lifted.gripper[t] = chunk.steps[static_cast<std::size_t>(t)].gripper;
  }
  return lifted;
}

ActionChunk project_chunk(const KinematicChain& chain, const JointChunk& lifted) {
  ActionChunk chunk;
  chunk.steps.resize(lifted.q.size());
  for (int t = 0; t < lifted.length(); ++t) {
    chunk.steps[static_cast<std::size_t>(t)] = forward_kinematics(
        chain, chain.clamp(lifted.q[static_cast<std::size_t>(t)]), clamp01(lifted.gripper[t]));
  }
  return chunk;
}

NoisedChunk forward_noise(const NoiseSchedule& schedule, const KinematicChain& chain,
                          const NodeToJointMap& ik, const ActionChunk& a0, int k,
                          const Eigen::MatrixXd& eps, const Eigen::VectorXd& eps_gripper,
                          const JointVector* hint) {
  check_step(schedule, k, "forward_noise", /*k_min=*/0);
  check_noise(chain, a0.length(), eps, eps_gripper, "forward_noise");

  const double signal = std::sqrt(schedule.alpha_bar_at(k));
  const double noise = std::sqrt(1.0 - schedule.alpha_bar_at(k));

  const JointChunk q0 = lift_chunk(ik, a0, hint ? *hint : chain.mid_config());
  NoisedChunk out;
  out.lifted.q.resize(q0.q.size());
  out.lifted.gripper.resize(q0.length());
  for (int t = 0; t < q0.length(); ++t) {
    out.lifted.q[static_cast<std::size_t>(t)] =
        chain.clamp(signal * q0.q[static_cast<std::size_t>(t)] + noise * eps.col(t));
    out.lifted.gripper[t] = signal * q0.gripper[t] + noise * eps_gripper[t];
  }
  out.chunk = project_chunk(chain, out.lifted);
  return out;
}

std::pair<JointChunk, double> posterior_mean(const NoiseSchedule& schedule, const JointChunk& q0,
                                             const JointChunk& qk, int k) {
  check_step(schedule, k, "posterior_mean");
  if (q0.length() != qk.length())
    throw std::invalid_argument("posterior_mean: chunk length mismatch");
  const double c0 = schedule.c0_at(k);
  const double ck = schedule.ck_at(k);
  JointChunk mu;
  mu.q.resize(q0.q.size());
  mu.gripper = c0 * q0.gripper + ck * qk.gripper;
  for (std::size_t t = 0; t < q0.q.size(); ++t) mu.q[t] = c0 * q0.q[t] + ck * qk.q[t];
  return {std::move(mu), schedule.beta_tilde_at(k)};
}

ReverseStepResult reverse_step(const NoiseSchedule& schedule, const KinematicChain& chain,
                               const NodeToJointMap& ik, const ActionChunk& ak,
                               const ActionChunk& a0_hat, int k, const Eigen::MatrixXd& z,
                               const Eigen::VectorXd& z_gripper, const JointChunk* qk_cache,
                               const JointChunk* q0_hint) {
  check_step(schedule, k, "reverse_step");
  check_noise(chain, ak.length(), z, z_gripper, "reverse_step");
  if (a0_hat.length() != ak.length())
    throw std::invalid_argument("reverse_step: chunk length mismatch");

  const JointChunk qk = qk_cache ? *qk_cache : lift_chunk(ik, ak, chain.mid_config());
  const JointChunk q0 = lift_chunk(ik, a0_hat, chain.mid_config(), q0_hint ? q0_hint : &qk);

  auto [mu, beta_tilde] = posterior_mean(schedule, q0, qk, k);
  const double sigma = std::sqrt(beta_tilde);

  ReverseStepResult out;
  out.q0_lift = q0;
  out.lifted.q.resize(mu.q.size());
  out.lifted.gripper.resize(mu.length());
  for (int t = 0; t < mu.length(); ++t) {
    out.lifted.q[static_cast<std::size_t>(t)] =
        chain.clamp(mu.q[static_cast<std::size_t>(t)] + sigma * z.col(t));
    out.lifted.gripper[t] = mu.gripper[t] + sigma * z_gripper[t];
  }
  out.chunk = project_chunk(chain, out.lifted);
  return out;
}

ReverseStepResult ddim_step(const NoiseSchedule& schedule, const KinematicChain& chain,
                            const NodeToJointMap& ik, const ActionChunk& ak,
                            const ActionChunk& a0_hat, int k, int k_prev,
                            const JointChunk* qk_cache, const JointChunk* q0_hint) {
  check_step(schedule, k, "ddim_step");
  if (k_prev < 0 || k_prev >= k) throw std::invalid_argument("ddim_step: need 0 <= k_prev < k");
  if (a0_hat.length() != ak.length())
    throw std::invalid_argument("ddim_step: chunk length mismatch");

  const JointChunk qk = qk_cache ? *qk_cache : lift_chunk(ik, ak, chain.mid_config());
  const JointChunk q0 = lift_chunk(ik, a0_hat, chain.mid_config(), q0_hint ? q0_hint : &qk);

  const double sa_k = std::sqrt(schedule.alpha_bar_at(k));
  const double sn_k = std::sqrt(1.0 - schedule.alpha_bar_at(k));
  const double sa_p = std::sqrt(schedule.alpha_bar_at(k_prev));
  const double sn_p = std::sqrt(1.0 - schedule.alpha_bar_at(k_prev));

  ReverseStepResult out;
  out.q0_lift = q0;
  out.lifted.q.resize(q0.q.size());
  out.lifted.gripper.resize(q0.length());
  for (int t = 0; t < q0.length(); ++t) {
    const auto& x0 = q0.q[static_cast<std::size_t>(t)];
    const JointVector eps_hat = (qk.q[static_cast<std::size_t>(t)] - sa_k * x0) / sn_k;
    out.lifted.q[static_cast<std::size_t>(t)] = chain.clamp(sa_p * x0 + sn_p * eps_hat);
    const double geps = (qk.gripper[t] - sa_k * q0.gripper[t]) / sn_k;
    out.lifted.gripper[t] = sa_p * q0.gripper[t] + sn_p * geps;
  }
  out.chunk = project_chunk(chain, out.lifted);
  return out;
}

ActionChunk sample_action_chunk(const NoiseSchedule& schedule, const KinematicChain& chain,
                                const NodeToJointMap& ik, const DenoiseFn& denoise, int horizon,
                                Rng& rng, const SampleOptions& options) {
  if (horizon < 1) throw std::invalid_argument("sample_action_chunk: horizon must be >= 1");
  const int n = chain.n_dof();

  // A^K ~ N(0, I) in joint space, projected.
  JointChunk lifted;
  lifted.q.resize(static_cast<std::size_t>(horizon));
  lifted.gripper.resize(horizon);
  for (int t = 0; t < horizon; ++t) {
    lifted.q[static_cast<std::size_t>(t)] = chain.clamp(rng.normal_vector(n));
    lifted.gripper[t] = rng.normal();
  }
  ActionChunk chunk = project_chunk(chain, lifted);

  JointChunk q0_hint;
  bool have_hint = false;

  auto advance = [&](const ReverseStepResult& result) {
    chunk = result.chunk;
    lifted = result.lifted;
    q0_hint = result.q0_lift;
    have_hint = true;
  };

  if (options.sampler == SamplerKind::kDdpm) {
    for (int k = schedule.K; k >= 1; --k) {
      const ActionChunk a0_hat = denoise(chunk, k);
      const Eigen::MatrixXd z = rng.normal_matrix(n, horizon);
      const Eigen::VectorXd zg = rng.normal_vector(horizon);
      advance(reverse_step(schedule, chain, ik, chunk, a0_hat, k, z, zg, &lifted,
                           have_hint ? &q0_hint : nullptr));
    }
  } else {
    const std::vector<int> steps = ddim_subsequence(schedule.K, options.ddim_steps);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const int k = steps[i];
      const int k_prev = (i + 1 < steps.size()) ? steps[i + 1] : 0;
      const ActionChunk a0_hat = denoise(chunk, k);
      advance(ddim_step(schedule, chain, ik, chunk, a0_hat, k, k_prev, &lifted,
                        have_hint ? &q0_hint : nullptr));
    }
  }
  return chunk;
}

Eigen::VectorXd sample_vector(const NoiseSchedule& schedule, const DenoiseVecFn& denoise,
                              Eigen::Index dim, Rng& rng, const SampleOptions& options) {
  Eigen::VectorXd x = rng.normal_vector(dim);
  if (options.sampler == SamplerKind::kDdpm) {
    for (int k = schedule.K; k >= 1; --k) {
      const Eigen::VectorXd x0 = denoise(x, k);
      const Eigen::VectorXd z = rng.normal_vector(dim);
      x = schedule.c0_at(k) * x0 + schedule.ck_at(k) * x +
          std::sqrt(schedule.beta_tilde_at(k)) * z;
    }
  } else {
    const std::vector<int> steps = ddim_subsequence(schedule.K, options.ddim_steps);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const int k = steps[i];
      const int k_prev = (i + 1 < steps.size()) ? steps[i + 1] : 0;
      const Eigen::VectorXd x0 = denoise(x, k);
      const double sa_k = std::sqrt(schedule.alpha_bar_at(k));
      const double sn_k = std::sqrt(1.0 - schedule.alpha_bar_at(k));
      const Eigen::VectorXd eps_hat = (x - sa_k * x0) / sn_k;
      x = std::sqrt(schedule.alpha_bar_at(k_prev)) * x0 +
          std::sqrt(1.0 - schedule.alpha_bar_at(k_prev)) * eps_hat;
    }
  }
  return x;
}

}  // namespace kadp
