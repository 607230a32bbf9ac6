// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>

namespace kadp {

// Deterministic random number generator (xoshiro256** core).
//
// The uniform and normal transforms are implemented by hand so that a given
// seed produces the same stream on every build. (The standard <random>
// distributions are implementation-defined, which breaks the
// bit-reproducibility contract for datasets and checkpoints.)
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform in [lo, hi). Degenerate intervals return lo exactly.
  double uniform(double lo, double hi);

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (pairs cached).
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);
  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd uniform_vector(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  // Derives an independent child stream; `id` selects the substream.
  Rng substream(std::uint64_t id) const;

  // Serializes engine state + Box-Muller cache (used by resumable training).
  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  Rng() = default;

  // xoshiro-style state advanced by splitmix64; small, fast, serializable.
  std::uint64_t state_[4] = {0, 0, 0, 0};
  bool have_spare_ = false;
  double spare_ = 0.0;
  std::uint64_t seed_ = 0;
};

// FNV-1a over raw bytes; the project-wide content hash.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_append(std::uint64_t h, const void* data, std::size_t size);

}  // namespace kadp
