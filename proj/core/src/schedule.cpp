// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace kadp {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "squared-cosine") return ScheduleKind::kSquaredCosine;
  if (s == "linear") return ScheduleKind::kLinear;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

NoiseSchedule make_schedule(int K, ScheduleKind kind, double beta_start, double beta_end) {
  if (K < 1) throw std::invalid_argument("make_schedule: K must be >= 1");

  NoiseSchedule s;
  s.K = K;
  s.beta.resize(K);

  if (kind == ScheduleKind::kSquaredCosine) {
    const double shift = 0.008;
    auto f = [&](int k) {
      const double x = (static_cast<double>(k) / K + shift) / (1.0 + shift) * M_PI / 2.0;
      const double c = std::cos(x);
      return c * c;
    };
    const double f0 = f(0);
    double prev = 1.0;
    for (int k = 1; k <= K; ++k) {
      const double cur = f(k) / f0;
      s.beta[k - 1] = std::min(1.0 - cur / prev, 0.999);
      prev = cur;
    }
  } else {
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_end < beta_start)
      throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
    for (int k = 1; k <= K; ++k) {
      const double t = (K == 1) ? 0.0 : static_cast<double>(k - 1) / (K - 1);
      s.beta[k - 1] = beta_start + (beta_end - beta_start) * t;
    }
  }

  s.alpha_bar.resize(K + 1);
  s.alpha_bar[0] = 1.0;
  for (int k = 1; k <= K; ++k) s.alpha_bar[k] = s.alpha_bar[k - 1] * (1.0 - s.beta[k - 1]);

  s.beta_tilde.resize(K);
  s.c0.resize(K);
  s.ck.resize(K);
  for (int k = 1; k <= K; ++k) {
    const double b = s.beta[k - 1];
    const double abar = s.alpha_bar[k];
    const double abar_prev = s.alpha_bar[k - 1];
    const double denom = 1.0 - abar;
    s.beta_tilde[k - 1] = (1.0 - abar_prev) * b / denom;
    s.c0[k - 1] = std::sqrt(abar_prev) * b / denom;
    s.ck[k - 1] = std::sqrt(1.0 - b) * (1.0 - abar_prev) / denom;
  }
  return s;
}

std::vector<int> ddim_subsequence(int K, int count) {
  if (count < 1 || count > K)
    throw std::invalid_argument("ddim_subsequence: need 1 <= count <= K");
  if (K % count != 0)
    throw std::invalid_argument("ddim_subsequence: count must divide K for a uniform stride");
  std::vector<int> steps;
  const int stride = K / count;
  for (int k = K; k >= stride; k -= stride) steps.push_back(k);
  return steps;
}

}  // namespace kadp
