// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/rng.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"

using kadp::Rng;

TEST_CASE("same seed, same stream") {
  Rng a(1234), b(1234);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(1234), d(1235);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("uniform bounds and degenerate interval") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = rng.uniform(-2.0, 3.0);
    CHECK(v >= -2.0);
    CHECK(v < 3.0);
  }
  for (int i = 0; i < 100; ++i) CHECK(rng.uniform(0.7, 0.7) == 0.7);
  CHECK_THROWS(rng.uniform(1.0, 0.0));
}

TEST_CASE("uniform_index stays in range and covers all residues") {
  Rng rng(11);
  std::vector<int> counts(13, 0);
  for (int i = 0; i < 13000; ++i) {
    const std::uint64_t k = rng.uniform_index(13);
    REQUIRE(k < 13);
    ++counts[static_cast<int>(k)];
  }
  // Expected 1000 per bucket; a fair stream stays within a wide band.
  for (int c : counts) {
    CHECK(c > 800);
    CHECK(c < 1200);
  }
  CHECK_THROWS(rng.uniform_index(0));
}

TEST_CASE("normal moments") {
  Rng rng(42);
  const int n = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  // 3-sigma bands of the estimators: sd(mean) = 1/sqrt(n), sd(var) ~ sqrt(2/n).
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("state round trip preserves the stream, including the normal cache") {
  Rng rng(99);
  rng.normal();  // leaves a cached Box-Muller spare behind

  std::stringstream ss;
  rng.save_state(ss);
  Rng restored(0);
  restored.load_state(ss);

  for (int i = 0; i < 100; ++i) {
    CHECK(rng.normal() == restored.normal());
    CHECK(rng.next_u64() == restored.next_u64());
  }
}

TEST_CASE("substreams are deterministic and distinct") {
  Rng root(5);
  Rng a = root.substream(1);
  Rng b = root.substream(2);
  Rng a2 = Rng(5).substream(1);
  CHECK(a.next_u64() == a2.next_u64());
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("fnv1a matches the published reference values") {
  CHECK(kadp::fnv1a(nullptr, 0) == 0xcbf29ce484222325ull);
  const char a = 'a';
  CHECK(kadp::fnv1a(&a, 1) == 0xaf63dc4c8601ec8cull);
  const char foobar[] = "foobar";
  CHECK(kadp::fnv1a(foobar, 6) == 0x85944171f73967e8ull);
}
