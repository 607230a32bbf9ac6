// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <string>

namespace kadp {

enum class ScheduleKind { kSquaredCosine, kLinear };

ScheduleKind schedule_kind_from_string(const std::string& s);

// Diffusion noise schedule over steps k = 1..K, plus the derived posterior
// quantities. Step indices are 1-based to match the recurrences; alpha_bar
// is defined down to k = 0 with alpha_bar(0) = 1.
struct NoiseSchedule {
  int K = 0;

  Eigen::VectorXd beta;        // K entries, beta(k) for k = 1..K
  Eigen::VectorXd alpha_bar;   // K+1 entries, alpha_bar(k) for k = 0..K
  Eigen::VectorXd beta_tilde;  // K entries: (1 - abar^{k-1}) beta^k / (1 - abar^k)
  Eigen::VectorXd c0;          // K entries: sqrt(abar^{k-1}) beta^k / (1 - abar^k)
  Eigen::VectorXd ck;          // K entries: sqrt(alpha^k)(1 - abar^{k-1}) / (1 - abar^k)

  double beta_at(int k) const { return beta[k - 1]; }
  double alpha_bar_at(int k) const { return alpha_bar[k]; }
  double beta_tilde_at(int k) const { return beta_tilde[k - 1]; }
  double c0_at(int k) const { return c0[k - 1]; }
  double ck_at(int k) const { return ck[k - 1]; }
};

// Builds a K-step schedule. The squared-cosine kind (the default) uses the
// shifted-cosine alpha_bar profile with s = 0.008 and per-step beta clipped
// to 0.999; the linear kind spaces beta uniformly between beta_start and
// beta_end (those two parameters are ignored by the squared-cosine kind).
NoiseSchedule make_schedule(int K, ScheduleKind kind = ScheduleKind::kSquaredCosine,
                            double beta_start = 1e-4, double beta_end = 0.02);

// Uniform-stride DDIM step subsequence: `count` descending steps ending
// above 0, e.g. K=100, count=10 -> {100, 90, ..., 10}. The sampler appends
// the final hop to 0 itself.
std::vector<int> ddim_subsequence(int K, int count);

}  // namespace kadp
