// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/diffusion.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "kadp/chain.hpp"
#include "kadp/kinematics.hpp"
#include "kadp/rng.hpp"
#include "kadp/schedule.hpp"

using namespace kadp;

namespace {

KinematicChain one_joint_chain() {
  const Eigen::Vector3d uz(0, 0, 1);
  Eigen::VectorXd lo(1), hi(1);
  lo << -9.0;
  hi << 9.0;
  return KinematicChain({{uz, {0, 0, 0}}}, lo, hi, {{0, {1, 0, 0}}});
}

ActionChunk feasible_chunk(const KinematicChain& chain, const std::vector<JointVector>& qs,
                           double gripper = 0.3) {
  ActionChunk chunk;
  for (const auto& q : qs) chunk.steps.push_back(forward_kinematics(chain, q, gripper));
  return chunk;
}

double chunk_distance(const ActionChunk& a, const ActionChunk& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    double mean = 0.0;
    for (Eigen::Index i = 0; i < a.steps[t].positions.cols(); ++i)
      mean += (a.steps[t].positions.col(i) - b.steps[t].positions.col(i)).norm();
    worst = std::max(worst, mean / static_cast<double>(a.steps[t].positions.cols()));
  }
  return worst;
}

}  // namespace

TEST_CASE("schedule invariants hold for both kinds") {
  for (ScheduleKind kind : {ScheduleKind::kSquaredCosine, ScheduleKind::kLinear}) {
    const NoiseSchedule s = make_schedule(100, kind);
    CHECK(s.alpha_bar_at(0) == 1.0);
    for (int k = 1; k <= s.K; ++k) {
      CHECK(s.beta_at(k) > 0.0);
      CHECK(s.beta_at(k) < 1.0);
      CHECK(s.alpha_bar_at(k) < s.alpha_bar_at(k - 1));
      // c0^k (1 - abar^k) = sqrt(abar^{k-1}) beta^k, exactly up to rounding.
      const double lhs = s.c0_at(k) * (1.0 - s.alpha_bar_at(k));
      const double rhs = std::sqrt(s.alpha_bar_at(k - 1)) * s.beta_at(k);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
      // c0^k + ck^k sqrt(abar^k) = sqrt(abar^{k-1}).
      const double combo = s.c0_at(k) + s.ck_at(k) * std::sqrt(s.alpha_bar_at(k));
      CHECK(std::abs(combo - std::sqrt(s.alpha_bar_at(k - 1))) <= 1e-12);
    }
    CHECK(s.beta_tilde_at(1) == 0.0);
  }
  CHECK_THROWS(make_schedule(0));
}

TEST_CASE("vanishing linear betas leave the signal untouched") {
  const NoiseSchedule s = make_schedule(100, ScheduleKind::kLinear, 1e-12, 1e-12);
  CHECK(std::abs(s.alpha_bar_at(100) - 1.0) <= 1e-9);
}

TEST_CASE("squared-cosine alpha_bar matches the closed form") {
  const int K = 100;
  const NoiseSchedule s = make_schedule(K, ScheduleKind::kSquaredCosine);
  const double shift = 0.008;
  auto f = [&](int k) {
    const double c = std::cos((static_cast<double>(k) / K + shift) / (1.0 + shift) * M_PI / 2.0);
    return c * c;
  };
  bool clipped_before_end = false;
  for (int k = 1; k <= K - 1; ++k) {
    if (s.beta_at(k) >= 0.999) clipped_before_end = true;
    const double expected = f(k) / f(0);
    CHECK(std::abs(s.alpha_bar_at(k) - expected) <= 1e-12 * expected);
  }
  // Only the very last step hits the 0.999 beta clip (cos(pi/2) -> 0).
  CHECK_FALSE(clipped_before_end);
  CHECK(s.beta_at(K) == 0.999);
  CHECK(s.alpha_bar_at(K) == s.alpha_bar_at(K - 1) * (1.0 - 0.999));
}

TEST_CASE("ddim subsequence is the uniform descending stride") {
  const std::vector<int> steps = ddim_subsequence(100, 10);
  REQUIRE(steps.size() == 10);
  CHECK(steps.front() == 100);
  CHECK(steps.back() == 10);
  for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] == steps[i - 1] - 10);
  CHECK_THROWS(ddim_subsequence(100, 0));
  CHECK_THROWS(ddim_subsequence(100, 101));
}

TEST_CASE("posterior coefficients match an independently coded closed form") {
  const NoiseSchedule s = make_schedule(50);
  Rng rng(7);
  // Recompute everything from the beta array alone.
  std::vector<double> abar(static_cast<std::size_t>(s.K + 1), 1.0);
  for (int k = 1; k <= s.K; ++k)
    abar[static_cast<std::size_t>(k)] = abar[static_cast<std::size_t>(k - 1)] * (1.0 - s.beta_at(k));
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(s.K)));
    const double x0 = rng.normal(), xk = rng.normal();
    const double ak = abar[static_cast<std::size_t>(k)], ap = abar[static_cast<std::size_t>(k - 1)];
    const double mu_ref = std::sqrt(ap) * s.beta_at(k) / (1.0 - ak) * x0 +
                          std::sqrt(1.0 - s.beta_at(k)) * (1.0 - ap) / (1.0 - ak) * xk;

    JointChunk q0, qk;
    q0.q = {Eigen::VectorXd::Constant(1, x0)};
    q0.gripper = Eigen::VectorXd::Constant(1, x0);
    qk.q = {Eigen::VectorXd::Constant(1, xk)};
    qk.gripper = Eigen::VectorXd::Constant(1, xk);
    const auto [mu, beta_tilde] = posterior_mean(s, q0, qk, k);
    CHECK(std::abs(mu.q[0][0] - mu_ref) <= 1e-12 * std::max(1.0, std::abs(mu_ref)));
    CHECK(std::abs(mu.gripper[0] - mu_ref) <= 1e-12 * std::max(1.0, std::abs(mu_ref)));
    CHECK(beta_tilde == s.beta_tilde_at(k));

    // Equivalent epsilon-form of the same mean: mu = sqrt(abar^{k-1}) x0 +
    // sqrt(1 - abar^{k-1} - beta_tilde^k) eps_hat.
    const double eps_hat = (xk - std::sqrt(ak) * x0) / std::sqrt(1.0 - ak);
    const double mu_eps =
        std::sqrt(ap) * x0 + std::sqrt(1.0 - ap - s.beta_tilde_at(k)) * eps_hat;
    CHECK(std::abs(mu.q[0][0] - mu_eps) <= 1e-9 * std::max(1.0, std::abs(mu_eps)));
  }
  // q0 = qk collapses to (c0 + ck) q0.
  JointChunk same;
  same.q = {Eigen::VectorXd::Constant(2, 0.4)};
  same.gripper = Eigen::VectorXd::Constant(1, 0.4);
  const auto [mu, bt] = posterior_mean(s, same, same, 7);
  CHECK(mu.q[0].isApproxToConstant(0.4 * (s.c0_at(7) + s.ck_at(7)), 1e-14));
  CHECK(bt > 0.0);
}

TEST_CASE("forward noise: identity and zero-noise limits") {
  KinematicChain chain = make_preset_chain("planar2w");
  IkWeights weights = IkWeights::uniform(2);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(100);

  const std::vector<JointVector> qs = {Eigen::Vector2d(0.3, 0.8), Eigen::Vector2d(0.4, 0.7)};
  const ActionChunk a0 = feasible_chunk(chain, qs, 0.7);
  const Eigen::MatrixXd eps0 = Eigen::MatrixXd::Zero(2, 2);
  const Eigen::VectorXd epsg0 = Eigen::VectorXd::Zero(2);

  const NoisedChunk identity = forward_noise(s, chain, ik, a0, 0, eps0, epsg0);
  CHECK(chunk_distance(identity.chunk, a0) <= 1e-7);
  CHECK(identity.chunk.steps[0].gripper == doctest::Approx(0.7).epsilon(1e-12));

  const int k = 40;
  const NoisedChunk shrunk = forward_noise(s, chain, ik, a0, k, eps0, epsg0);
  const double scale = std::sqrt(s.alpha_bar_at(k));
  for (int t = 0; t < 2; ++t) {
    // eps = 0: the lifted variable is exactly sqrt(abar^k) q0.
    CHECK((shrunk.lifted.q[static_cast<std::size_t>(t)] - scale * qs[static_cast<std::size_t>(t)])
              .cwiseAbs()
              .maxCoeff() <= 1e-7);
    const Eigen::Matrix3Xd expect =
        forward_kinematics(chain, scale * qs[static_cast<std::size_t>(t)]).positions;
    CHECK((shrunk.chunk.steps[static_cast<std::size_t>(t)].positions - expect)
              .cwiseAbs()
              .maxCoeff() <= 1e-6);
    CHECK(shrunk.lifted.gripper[t] == doctest::Approx(scale * 0.7).epsilon(1e-12));
  }

  CHECK_THROWS(forward_noise(s, chain, ik, a0, 101, eps0, epsg0));
  CHECK_THROWS(forward_noise(s, chain, ik, a0, 5, Eigen::MatrixXd::Zero(3, 2), epsg0));
}

TEST_CASE("forward noise matches the Gaussian marginal in joint space") {
  KinematicChain chain = make_preset_chain("planar2w");
  IkWeights weights = IkWeights::uniform(2);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(100);
  const JointVector q0 = Eigen::Vector2d(0.3, 0.8);
  const ActionChunk a0 = feasible_chunk(chain, {q0});

  const int k = 50;
  const double mean_ref = std::sqrt(s.alpha_bar_at(k));
  const double var_ref = 1.0 - s.alpha_bar_at(k);

  Rng rng(99);
  const int n_draws = 10000;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sumsq = Eigen::Vector2d::Zero();
  double cross = 0.0;
  for (int i = 0; i < n_draws; ++i) {
    const Eigen::MatrixXd eps = rng.normal_matrix(2, 1);
    const Eigen::VectorXd epsg = rng.normal_vector(1);
    const NoisedChunk nc = forward_noise(s, chain, ik, a0, k, eps, epsg, &q0);
    const Eigen::Vector2d dev = nc.lifted.q[0] - mean_ref * q0;
    sum += dev;
    sumsq += dev.cwiseProduct(dev);
    cross += dev[0] * dev[1];
  }
  const double sd = std::sqrt(var_ref);
  for (int j = 0; j < 2; ++j) {
    const double mean = sum[j] / n_draws;
    const double var = sumsq[j] / n_draws - mean * mean;
    CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(static_cast<double>(n_draws)));
    CHECK(std::abs(var - var_ref) <= 3.0 * var_ref * std::sqrt(2.0 / n_draws));
  }
  CHECK(std::abs(cross / n_draws) <= 3.0 * var_ref / std::sqrt(static_cast<double>(n_draws)));
}

TEST_CASE("stepwise noising composition matches the direct marginal") {
  // Pure joint-space statement, checked on scalars: iterating
  // x_k = sqrt(1 - beta_k) x_{k-1} + sqrt(beta_k) e_k has the same mean and
  // variance as the one-shot x_k = sqrt(abar_k) x_0 + sqrt(1 - abar_k) e.
  const NoiseSchedule s = make_schedule(100);
  const double x0 = 0.7;
  Rng rng(123);
  for (int k : {1, 50, 100}) {
    const int n_draws = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_draws; ++i) {
      double x = x0;
      for (int j = 1; j <= k; ++j)
        x = std::sqrt(1.0 - s.beta_at(j)) * x + std::sqrt(s.beta_at(j)) * rng.normal();
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / n_draws;
    const double var = sumsq / n_draws - mean * mean;
    const double mean_ref = std::sqrt(s.alpha_bar_at(k)) * x0;
    const double var_ref = 1.0 - s.alpha_bar_at(k);
    CHECK(std::abs(mean - mean_ref) <=
          3.0 * std::sqrt(var_ref / n_draws) + 1e-12);
    CHECK(std::abs(var - var_ref) <= 3.0 * var_ref * std::sqrt(2.0 / n_draws) + 1e-12);
  }
}

TEST_CASE("reverse step: linear collapse, noise-free final step") {
  KinematicChain chain = make_preset_chain("planar2w");
  IkWeights weights = IkWeights::uniform(2);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(100);

  const JointVector q = Eigen::Vector2d(0.5, 1.0);
  const ActionChunk ak = feasible_chunk(chain, {q});
  const Eigen::MatrixXd z0 = Eigen::MatrixXd::Zero(2, 1);
  const Eigen::VectorXd zg0 = Eigen::VectorXd::Zero(1);

  const int k = 30;
  const ReverseStepResult collapse = reverse_step(s, chain, ik, ak, ak, k, z0, zg0);
  const JointVector expect = (s.c0_at(k) + s.ck_at(k)) * q;
  CHECK((collapse.lifted.q[0] - expect).cwiseAbs().maxCoeff() <= 1e-7);

  // k = 1 has zero posterior variance: any z produces the same output.
  Rng rng(5);
  const ActionChunk a0_hat = feasible_chunk(chain, {Eigen::Vector2d(0.4, 0.9)});
  const ReverseStepResult a =
      reverse_step(s, chain, ik, ak, a0_hat, 1, rng.normal_matrix(2, 1), rng.normal_vector(1));
  const ReverseStepResult b =
      reverse_step(s, chain, ik, ak, a0_hat, 1, rng.normal_matrix(2, 1), rng.normal_vector(1));
  CHECK(chunk_distance(a.chunk, b.chunk) == 0.0);
}

TEST_CASE("ddim step equals the ddpm mean when ak sits on the signal ray") {
  KinematicChain chain = one_joint_chain();
  IkWeights weights = IkWeights::uniform(1);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(100);

  const JointVector q0 = Eigen::VectorXd::Constant(1, 0.6);
  const ActionChunk a0 = feasible_chunk(chain, {q0});
  for (int k : {2, 10, 60}) {
    // ak = FK(sqrt(abar_k) q0) makes eps_hat = 0, where the eta=0 DDIM hop and
    // the DDPM posterior mean coincide at sqrt(abar_{k-1}) q0.
    const ActionChunk ak =
        feasible_chunk(chain, {JointVector(std::sqrt(s.alpha_bar_at(k)) * q0)});
    const ReverseStepResult ddim = ddim_step(s, chain, ik, ak, a0, k, k - 1);
    const ReverseStepResult ddpm = reverse_step(s, chain, ik, ak, a0, k,
                                                Eigen::MatrixXd::Zero(1, 1),
                                                Eigen::VectorXd::Zero(1));
    CHECK(std::abs(ddim.lifted.q[0][0] - ddpm.lifted.q[0][0]) <= 1e-9);
    CHECK(std::abs(ddim.lifted.q[0][0] - std::sqrt(s.alpha_bar_at(k - 1)) * 0.6) <= 1e-9);
  }
  CHECK_THROWS(ddim_step(s, chain, ik, a0, a0, 5, 5));
}

TEST_CASE("oracle denoiser recovers the clean chunk through the full reverse chain") {
  KinematicChain chain = make_preset_chain("planar2");
  IkWeights weights = IkWeights::uniform(2);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(100);
  Rng rng(2025);

  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const JointVector qa = sample_feasible_config(chain, rng);
    const JointVector qb = sample_feasible_config(chain, rng);
    const ActionChunk a0 = feasible_chunk(chain, {qa, qb});

    NoisedChunk state = forward_noise(s, chain, ik, a0, s.K, rng.normal_matrix(2, 2),
                                      rng.normal_vector(2));
    ActionChunk current = state.chunk;
    JointChunk lifted = state.lifted;
    for (int k = s.K; k >= 1; --k) {
      const ReverseStepResult r = reverse_step(s, chain, ik, current, a0, k,
                                               rng.normal_matrix(2, 2), rng.normal_vector(2),
                                               &lifted);
      current = r.chunk;
      lifted = r.lifted;
    }
    worst = std::max(worst, chunk_distance(current, a0));
  }
  CHECK(worst <= 2e-3);
}

TEST_CASE("ddim with an exact predictor reproduces x0 on a flat vector") {
  const NoiseSchedule s = make_schedule(100);
  Rng rng(8);
  const Eigen::VectorXd x0 = rng.normal_vector(6);
  SampleOptions opts;
  opts.sampler = SamplerKind::kDdim;
  opts.ddim_steps = 10;
  const Eigen::VectorXd out =
      sample_vector(s, [&](const Eigen::VectorXd&, int) { return x0; }, 6, rng, opts);
  CHECK((out - x0).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("sampling is feasible by construction and deterministic") {
  KinematicChain chain = make_preset_chain("planar2");
  IkWeights weights = IkWeights::uniform(2);
  NodeToJointMap ik = exact_ik_map(chain, weights);
  const NoiseSchedule s = make_schedule(20);

  // An arbitrary, meaningless denoiser: feasibility must hold regardless.
  DenoiseFn silly = [&](const ActionChunk& ak, int k) {
    ActionChunk out = ak;
    for (auto& step : out.steps) {
      step.positions *= 0.9;
      step.positions.row(2).array() += 0.01 * k;
    }
    return out;
  };

  for (SamplerKind kind : {SamplerKind::kDdpm, SamplerKind::kDdim}) {
    SampleOptions opts;
    opts.sampler = kind;
    opts.ddim_steps = 5;
    Rng rng(42);
    const ActionChunk sample = sample_action_chunk(s, chain, ik, silly, 3, rng, opts);
    REQUIRE(sample.length() == 3);
    for (const auto& step : sample.steps) {
      CHECK(ik_error(chain, step.positions, weights, chain.mid_config()) <= 1e-4);
      CHECK(step.gripper >= 0.0);
      CHECK(step.gripper <= 1.0);
    }
    Rng rng2(42);
    const ActionChunk again = sample_action_chunk(s, chain, ik, silly, 3, rng2, opts);
    CHECK((flatten_chunk(sample).array() == flatten_chunk(again).array()).all());
  }
}

TEST_CASE("flatten and unflatten round trip") {
  KinematicChain chain = make_preset_chain("srs7");
  Rng rng(3);
  ActionChunk chunk;
  for (int t = 0; t < 4; ++t)
    chunk.steps.push_back(
        forward_kinematics(chain, sample_feasible_config(chain, rng), rng.uniform()));
  const Eigen::VectorXd flat = flatten_chunk(chunk);
  REQUIRE(flat.size() == 4 * (3 * 8 + 1));
  const ActionChunk back = unflatten_chunk(flat, 8);
  CHECK((flatten_chunk(back).array() == flat.array()).all());
  CHECK(back.steps[2].gripper == chunk.steps[2].gripper);
  CHECK_THROWS(unflatten_chunk(flat, 7));
}
