// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace kadp {

namespace {

constexpr char kMagic[8] = {'K', 'A', 'D', 'P', 'D', 'S', '0', '1'};
constexpr double kCloudGrid = 1e-4;  // 0.1 mm
constexpr std::int64_t kMaxCount = std::int64_t{1} << 28;

void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int64_t read_i64(std::istream& is, const char* what) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error(std::string("dataset: truncated reading ") + what);
  return v;
}

std::int64_t read_count(std::istream& is, const char* what) {
  const std::int64_t v = read_i64(is, what);
  if (v < 0 || v > kMaxCount)
    throw std::runtime_error(std::string("dataset: implausible count for ") + what);
  return v;
}

void write_doubles(std::ostream& os, const double* p, std::int64_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::istream& is, double* p, std::int64_t n, const char* what) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error(std::string("dataset: truncated reading ") + what);
}

std::int32_t quantize_coord(double v) {
  const double q = std::round(v / kCloudGrid);
  if (!(std::abs(q) <= 2e9)) throw std::runtime_error("dataset: coordinate too large to store");
  return static_cast<std::int32_t>(q);
}

void write_node_state(std::ostream& os, const NodeState& ns) {
  write_doubles(os, ns.positions.data(), 3 * ns.positions.cols());
  write_doubles(os, &ns.gripper, 1);
}

NodeState read_node_state(std::istream& is, std::int64_t m, const char* what) {
  NodeState ns;
  ns.positions.resize(3, m);
  read_doubles(is, ns.positions.data(), 3 * m, what);
  read_doubles(is, &ns.gripper, 1, what);
  return ns;
}

}  // namespace

Eigen::Matrix3Xd quantize_cloud(const Eigen::Matrix3Xd& cloud) {
  Eigen::Matrix3Xd out(3, cloud.cols());
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    out.data()[i] = quantize_coord(cloud.data()[i]) * kCloudGrid;
  return out;
}

void save_demonstrations(const std::vector<Demonstration>& demos, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_demonstrations: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_i64(os, static_cast<std::int64_t>(demos.size()));

  for (const Demonstration& demo : demos) {
    write_i64(os, static_cast<std::int64_t>(demo.task.size()));
    os.write(demo.task.data(), static_cast<std::streamsize>(demo.task.size()));
    write_i64(os, static_cast<std::int64_t>(demo.seed));
    write_i64(os, demo.success ? 1 : 0);
    write_i64(os, static_cast<std::int64_t>(demo.frames.size()));

    const std::int64_t points = demo.frames.empty() ? 0 : demo.frames.front().cloud.cols();
    const std::int64_t nodes =
        demo.frames.empty() ? 0 : demo.frames.front().proprio.positions.cols();
    write_i64(os, points);
    write_i64(os, nodes);

    for (const DemoFrame& f : demo.frames) {
      if (f.cloud.cols() != points || f.proprio.positions.cols() != nodes ||
          f.action.positions.cols() != nodes)
        throw std::invalid_argument("save_demonstrations: ragged frames within a demo");
      std::vector<std::int32_t> q(static_cast<std::size_t>(3 * points));
      for (Eigen::Index i = 0; i < f.cloud.size(); ++i)
        q[static_cast<std::size_t>(i)] = quantize_coord(f.cloud.data()[i]);
      os.write(reinterpret_cast<const char*>(q.data()),
               static_cast<std::streamsize>(q.size() * sizeof(std::int32_t)));
      write_node_state(os, f.proprio);
      write_node_state(os, f.action);
    }
  }
  if (!os) throw std::runtime_error("save_demonstrations: write failed for " + path);
}

std::vector<Demonstration> load_demonstrations(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_demonstrations: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error("load_demonstrations: not a demonstration file: " + path);

  std::vector<Demonstration> demos(
      static_cast<std::size_t>(read_count(is, "demo count")));
  for (Demonstration& demo : demos) {
    const std::int64_t name_len = read_count(is, "task name");
    demo.task.resize(static_cast<std::size_t>(name_len));
    is.read(demo.task.data(), name_len);
    if (!is) throw std::runtime_error("dataset: truncated reading task name");
    demo.seed = static_cast<std::uint64_t>(read_i64(is, "seed"));
    demo.success = read_i64(is, "success flag") != 0;
    const std::int64_t n_frames = read_count(is, "frame count");
    const std::int64_t points = read_count(is, "point count");
    const std::int64_t nodes = read_count(is, "node count");

    demo.frames.resize(static_cast<std::size_t>(n_frames));
    std::vector<std::int32_t> q(static_cast<std::size_t>(3 * points));
    for (DemoFrame& f : demo.frames) {
      is.read(reinterpret_cast<char*>(q.data()),
              static_cast<std::streamsize>(q.size() * sizeof(std::int32_t)));
      if (!is) throw std::runtime_error("dataset: truncated reading cloud");
      f.cloud.resize(3, points);
      for (Eigen::Index i = 0; i < f.cloud.size(); ++i)
        f.cloud.data()[i] = q[static_cast<std::size_t>(i)] * kCloudGrid;
      f.proprio = read_node_state(is, nodes, "proprio");
      f.action = read_node_state(is, nodes, "action");
    }
  }
  return demos;
}

std::vector<PolicySample> extract_policy_samples(const std::vector<Demonstration>& demos,
                                                 int obs_frames, int horizon) {
  if (obs_frames < 1) throw std::invalid_argument("extract_policy_samples: obs_frames < 1");
  if (horizon < 1) throw std::invalid_argument("extract_policy_samples: horizon < 1");

  std::vector<PolicySample> samples;
  for (const Demonstration& demo : demos) {
    const int n = static_cast<int>(demo.frames.size());
    for (int t = 0; t < n; ++t) {
      PolicySample s;
      s.obs.t_index = t;
      for (int i = obs_frames - 1; i >= 0; --i) {
        const int src = std::max(0, t - i);  // repeat the first frame before start
        s.obs.point_sets.push_back(demo.frames[static_cast<std::size_t>(src)].cloud);
        s.obs.proprio.push_back(demo.frames[static_cast<std::size_t>(src)].proprio);
      }
      for (int j = 0; j < horizon; ++j) {
        const int src = std::min(n - 1, t + j);  // repeat the last action past the end
        s.chunk.steps.push_back(demo.frames[static_cast<std::size_t>(src)].action);
      }
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace kadp
