// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "kadp/denoiser.hpp"
#include "kadp/diffusion.hpp"
#include "kadp/env.hpp"

namespace kadp {

// Snaps every coordinate to the storage grid (0.1 mm). Idempotent; the
// result is exactly what a save/load round trip returns for clouds.
Eigen::Matrix3Xd quantize_cloud(const Eigen::Matrix3Xd& cloud);

// Versioned binary container. Clouds are stored on the 0.1 mm grid as
// 32-bit integers; node states and gripper channels keep full precision.
// Writing is deterministic: identical demos produce identical bytes.
void save_demonstrations(const std::vector<Demonstration>& demos, const std::string& path);
std::vector<Demonstration> load_demonstrations(const std::string& path);

// One supervised example: an observation window and the action chunk that
// followed it.
struct PolicySample {
  Obs obs;
  ActionChunk chunk;
};

// Slices every demo frame into a training sample: the observation window
// covers the obs_frames frames ending at t (the first frame repeats before
// episode start) and the chunk covers actions t..t+horizon-1 (the last
// action repeats past episode end).
std::vector<PolicySample> extract_policy_samples(const std::vector<Demonstration>& demos,
                                                 int obs_frames, int horizon);

}  // namespace kadp
