// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/env.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "kadp/kinematics.hpp"

using namespace kadp;

namespace {

// Small clouds keep episode-heavy tests fast; the physics is unaffected.
TaskSpec cheap(TaskId id) {
  TaskSpec spec = make_task_spec(id);
  spec.cloud_points = 16;
  spec.cloud_raw_samples = 64;
  return spec;
}

// Unsigned distance from a point to the box *surface* (interior included).
double box_surface_distance(const Eigen::Vector3d& p, const Box& box) {
  const double outside = point_box_distance(p, box);
  if (outside > 0.0) return outside;
  return (box.half - (p - box.center).cwiseAbs()).minCoeff();
}

// A planar arm swinging over a box at the bottom of its arc: the endpoints
// of a half-turn are collision-free while the mid-sweep is deep inside.
Env swing_env(int substeps) {
  TaskSpec spec = cheap(TaskId::kReach);
  spec.chain_preset = "planar2w";
  spec.home_q = Eigen::Vector2d(0.0, 0.0);
  spec.substeps = substeps;
  spec.boxes = {{{0.0, 0.0, -0.9}, {0.2, 0.2, 0.05}}};
  spec.range_lo = {2.0, 0.0, 2.0};  // target far away: never an accidental success
  spec.range_hi = {2.0, 0.0, 2.0};
  return Env(spec);
}

}  // namespace

TEST_CASE("task names round-trip and presets construct") {
  for (const char* name : {"reach", "obstacle-reach", "elbow-push", "pick-analog"}) {
    const TaskId id = task_from_name(name);
    CHECK(task_name(id) == name);
    const Env env{make_task_spec(name)};
    CHECK(env.chain().n_dof() >= 2);
    CHECK(env.spec().max_steps >= 1);
  }
  CHECK_THROWS_AS(task_from_name("juggle"), std::invalid_argument);
}

TEST_CASE("task spec json round-trips and rejects junk") {
  for (auto id : {TaskId::kReach, TaskId::kObstacleReach, TaskId::kElbowPush,
                  TaskId::kPickAnalog}) {
    const TaskSpec spec = make_task_spec(id);
    const std::string text = task_spec_to_json(spec);
    const TaskSpec back = parse_task_spec_json(text);
    CHECK(task_spec_to_json(back) == text);  // fixed point
    CHECK(back.id == spec.id);
    CHECK(back.chain_preset == spec.chain_preset);
    CHECK(back.home_q.isApprox(spec.home_q));
    CHECK(back.boxes.size() == spec.boxes.size());
  }
  // A partial file inherits preset defaults for everything it omits.
  const TaskSpec partial = parse_task_spec_json(R"({"task": "reach", "max_steps": 7})");
  CHECK(partial.max_steps == 7);
  CHECK(partial.success_radius == make_task_spec(TaskId::kReach).success_radius);

  CHECK_THROWS_AS(parse_task_spec_json(R"({"chain": "srs7"})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_task_spec_json(R"({"task": "reach", "turbo": true})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_task_spec_json(R"({"task": "reach", "range": {"lo": [0,0,0]}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_task_spec_json(R"({"task": "reach", "cloud": {"pts": 4}})"),
                  std::invalid_argument);
}

TEST_CASE("env constructor validates the spec") {
  TaskSpec spec = make_task_spec(TaskId::kReach);
  spec.home_q = Eigen::Vector3d(0, 0, 0);
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);  // wrong dof

  spec = make_task_spec(TaskId::kReach);
  spec.home_q = Eigen::Vector2d(0.0, 9.0);  // elbow limit is 3.0
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);

  spec = make_task_spec(TaskId::kReach);
  spec.substeps = 0;
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);

  spec = make_task_spec(TaskId::kReach);
  spec.cloud_raw_samples = 8;  // fewer raw samples than output points
  spec.cloud_points = 16;
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);

  spec = make_task_spec(TaskId::kReach);
  spec.ee_nodes = {5};  // planar2 has 2 nodes
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);

  spec = make_task_spec(TaskId::kReach);
  spec.range_lo = {1.0, 0.0, 0.0};
  spec.range_hi = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);

  // Home pose buried inside an obstacle is a configuration error.
  spec = make_task_spec(TaskId::kReach);
  spec.boxes = {{{0.45, 0.0, 0.0}, {0.3, 0.3, 0.3}}};
  CHECK_THROWS_AS(Env{spec}, std::invalid_argument);
}

TEST_CASE("reset places the object uniformly over its range") {
  const Env env{cheap(TaskId::kObstacleReach)};
  const Eigen::Vector3d lo = env.spec().range_lo, hi = env.spec().range_hi;
  Rng rng(2024);
  const int n = 1000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sumsq = Eigen::Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const WorldState s = env.reset(rng);
    for (int d = 0; d < 3; ++d) {
      REQUIRE(s.object_center[d] >= lo[d]);
      REQUIRE(s.object_center[d] <= hi[d]);
    }
    sum += s.object_center;
    sumsq += s.object_center.cwiseProduct(s.object_center);
    CHECK(s.q.isApprox(env.spec().home_q));
    CHECK(!s.collision);
    CHECK(!s.attached);
    CHECK(s.step_count == 0);
  }
  for (int d = 0; d < 3; ++d) {
    const double width = hi[d] - lo[d];
    const double mean = sum[d] / n;
    const double var = sumsq[d] / n - mean * mean;
    // Uniform moments: mean (lo+hi)/2 with sd width/sqrt(12), variance
    // width^2/12 with sampling sd ~ width^2/(sqrt(180 n) / 2)... use 4-sigma
    // via Var(s^2) for the uniform: mu4 = width^4/80.
    const double mean_sd = width / std::sqrt(12.0 * n);
    CHECK(std::abs(mean - 0.5 * (lo[d] + hi[d])) <= 3.0 * mean_sd);
    const double var_true = width * width / 12.0;
    const double var_sd = std::sqrt((std::pow(width, 4) / 80.0 - var_true * var_true) / n);
    CHECK(std::abs(var - var_true) <= 4.0 * var_sd);
  }
}

TEST_CASE("reset: zero-width ranges are exact and seeds are reproducible") {
  const Env pick{cheap(TaskId::kPickAnalog)};
  Rng rng(5);
  for (int i = 0; i < 20; ++i)
    CHECK(pick.reset(rng).object_center.z() == pick.spec().range_lo.z());

  Rng a(77), b(77), c(78);
  const WorldState sa = pick.reset(a), sb = pick.reset(b), sc = pick.reset(c);
  CHECK(sa.object_center == sb.object_center);
  CHECK(sa.object_center != sc.object_center);
}

TEST_CASE("step validates commands and reaches them exactly") {
  const Env env{cheap(TaskId::kReach)};
  Rng rng(1);
  WorldState s = env.reset(rng);

  Eigen::Vector2d target(0.5, 1.0);
  const WorldState s1 = env.step(s, target, 0.75);
  CHECK(s1.q.isApprox(target));
  CHECK(s1.gripper == 0.75);
  CHECK(s1.step_count == 1);
  CHECK(!s1.collision);

  CHECK_THROWS_AS(env.step(s, Eigen::Vector3d(0, 0, 0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(env.step(s, Eigen::Vector2d(0.0, 5.0), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(env.step(s, Eigen::Vector2d(0.0, 1.0), 1.5), std::invalid_argument);
  CHECK_THROWS_AS(env.step(s, Eigen::Vector2d(0.0, 1.0), -0.1), std::invalid_argument);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(env.step(s, Eigen::Vector2d(nan, 1.0), 0.0), std::invalid_argument);
}

TEST_CASE("substep sweep catches a pass-through that endpoints miss") {
  // Half-turn of the shoulder sweeps the arm through a box at the arc
  // bottom; both endpoint configurations are collision-free.
  const Env env10 = swing_env(10);
  Rng rng(3);
  WorldState s = env10.reset(rng);
  const Eigen::Vector2d cmd(std::numbers::pi, 0.0);
  CHECK(!env10.robot_collides(s.q));
  CHECK(!env10.robot_collides(cmd));

  const WorldState hit = env10.step(s, cmd, 0.0);
  CHECK(hit.collision);
  CHECK(hit.q.isApprox(s.q));  // motion frozen at the pre-step configuration
  CHECK(!env10.check_success(hit));

  // Once latched, later steps stay frozen.
  const WorldState still = env10.step(hit, Eigen::Vector2d(0.1, 0.1), 0.0);
  CHECK(still.collision);
  CHECK(still.q.isApprox(s.q));
  CHECK(still.step_count == 2);

  // A single-substep check only sees the endpoints and misses the sweep:
  // exactly the failure mode the interpolation exists to prevent.
  const Env env1 = swing_env(1);
  const WorldState miss = env1.step(s, cmd, 0.0);
  CHECK(!miss.collision);
  CHECK(miss.q.isApprox(cmd));
}

TEST_CASE("halving the substep size never converts a detection into a miss") {
  const Env env10 = swing_env(10);
  const Env env20 = swing_env(20);
  Rng rng(4);
  WorldState base = env10.reset(rng);

  const std::vector<std::pair<Eigen::Vector2d, Eigen::Vector2d>> scenes = {
      {{0.0, 0.0}, {std::numbers::pi, 0.0}},
      {{0.0, 0.0}, {-std::numbers::pi, 0.0}},
      {{-1.2, 0.3}, {1.4, 0.2}},
      {{0.0, -2.0}, {3.1, 2.0}},
      {{1.5, 0.0}, {1.6, 0.1}},   // small motions far from the box
      {{0.3, 0.4}, {0.2, 0.6}},
      {{2.0, 1.0}, {2.6, -1.0}},
      {{-0.4, 1.1}, {0.5, 1.2}},
  };
  int detections = 0;
  for (const auto& [q0, cmd] : scenes) {
    if (env10.robot_collides(q0)) continue;  // scenes must start free
    WorldState s = base;
    s.q = q0;
    const bool coarse = env10.step(s, cmd, 0.0).collision;
    const bool fine = env20.step(s, cmd, 0.0).collision;
    if (coarse) {
      ++detections;
      CHECK(fine);
    }
  }
  CHECK(detections >= 2);  // the set must actually exercise detection
}

TEST_CASE("pick attachment: grasp, carry, release") {
  const Env env{cheap(TaskId::kPickAnalog)};
  Rng rng(9);
  WorldState s = env.reset(rng);

  // Plant the ball right at the gripper point so a close attaches.
  s.object_center = env.ee_center(s.q) + Eigen::Vector3d(0.02, 0.0, 0.0);
  const JointVector q0 = s.q;

  WorldState closed = env.step(s, q0, 1.0);
  CHECK(closed.attached);

  // Carrying: the object tracks the gripper displacement.
  JointVector q1 = q0;
  q1[1] += 0.2;
  q1[3] -= 0.15;
  const Eigen::Vector3d before = env.ee_center(q0), after = env.ee_center(q1);
  WorldState carried = env.step(closed, q1, 1.0);
  CHECK(carried.attached);
  CHECK((carried.object_center - (closed.object_center + after - before)).norm() <= 1e-12);

  // Release: the object stays where it was dropped.
  WorldState released = env.step(carried, q1, 0.0);
  CHECK(!released.attached);
  const Eigen::Vector3d rest = released.object_center;
  JointVector q2 = q1;
  q2[1] -= 0.4;
  WorldState moved_away = env.step(released, q2, 0.0);
  CHECK(moved_away.object_center == rest);

  // Closing far from the object must not attach.
  WorldState far = env.reset(rng);
  far.object_center = env.ee_center(far.q) + Eigen::Vector3d(0.5, 0.0, 0.0);
  CHECK(!env.step(far, far.q, 1.0).attached);
}

TEST_CASE("elbow-push press latch honours the finger-clearance gate") {
  TaskSpec spec = cheap(TaskId::kElbowPush);
  const Env env{spec};
  Rng rng(10);
  WorldState s = env.reset(rng);

  // Button straight at the elbow pad: at home the fingers are ~0.5 m away.
  const Eigen::Matrix3Xd pos = forward_kinematics(env.chain(), s.q).positions;
  s.object_center = pos.col(spec.elbow_node) + Eigen::Vector3d(0.01, 0.0, 0.0);

  WorldState pressed = env.step(s, s.q, 0.0);
  CHECK(pressed.pressed);
  CHECK(env.check_success(pressed));

  // The latch survives moving away.
  JointVector q1 = s.q;
  q1[1] -= 0.3;
  CHECK(env.step(pressed, q1, 0.0).pressed);

  // An impossible clearance requirement blocks the latch entirely.
  TaskSpec strict = spec;
  strict.finger_clearance = 10.0;
  const Env picky{strict};
  WorldState t = s;
  CHECK(!picky.step(t, t.q, 0.0).pressed);
  CHECK(!picky.check_success(picky.step(t, t.q, 0.0)));
}

TEST_CASE("success predicates") {
  const Env reach{cheap(TaskId::kReach)};
  Rng rng(21);
  WorldState s = reach.reset(rng);
  s.object_center = reach.ee_center(s.q) + Eigen::Vector3d(0.0, 0.0, 0.02);
  CHECK(reach.check_success(s));
  s.collision = true;  // collision voids everything
  CHECK(!reach.check_success(s));

  const Env pick{cheap(TaskId::kPickAnalog)};
  WorldState p = pick.reset(rng);
  p.object_center = pick.spec().goal_center + Eigen::Vector3d(0.01, 0.0, 0.0);
  p.attached = true;  // still held: not yet placed
  CHECK(!pick.check_success(p));
  p.attached = false;
  CHECK(pick.check_success(p));
  p.object_center = pick.spec().goal_center + Eigen::Vector3d(0.2, 0.0, 0.0);
  CHECK(!pick.check_success(p));
}

TEST_CASE("point clouds sample object surfaces only") {
  // Noise-free: every point sits exactly on the target sphere.
  TaskSpec spec = cheap(TaskId::kReach);
  spec.cloud_sigma = 0.0;
  const Env env{spec};
  Rng rng(31);
  WorldState s = env.reset(rng);
  const Eigen::Matrix3Xd cloud = env.render_pointcloud(s, rng);
  REQUIRE(cloud.cols() == spec.cloud_points);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i)
    CHECK(std::abs((cloud.col(i) - s.object_center).norm() - spec.object_radius) <= 1e-12);

  // Full scene with default noise: points stay within 6 sigma of some
  // primitive surface — in particular, none come from the robot body.
  const Env obs{make_task_spec(TaskId::kObstacleReach)};
  for (int scene = 0; scene < 5; ++scene) {
    WorldState w = obs.reset(rng);
    const Eigen::Matrix3Xd c = obs.render_pointcloud(w, rng);
    REQUIRE(c.cols() == obs.spec().cloud_points);
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      double d = std::abs((c.col(i) - w.object_center).norm() - obs.spec().object_radius);
      for (const Box& b : obs.spec().boxes)
        d = std::min(d, box_surface_distance(c.col(i), b));
      CHECK(d <= 6.0 * obs.spec().cloud_sigma);
    }
  }
}

TEST_CASE("point cloud rendering is deterministic in the rng") {
  const Env env{cheap(TaskId::kPickAnalog)};
  Rng ra(55), rb(55);
  const WorldState sa = env.reset(ra), sb = env.reset(rb);
  CHECK(env.render_pointcloud(sa, ra) == env.render_pointcloud(sb, rb));
}

TEST_CASE("farthest point sampling: identity, errors, endpoints") {
  Rng rng(61);
  Eigen::Matrix3Xd few(3, 3);
  few << 0, 1, 2, 0, 0, 0, 0, 0, 0;
  CHECK(farthest_point_sample(few, 5, rng) == few);
  CHECK(farthest_point_sample(few, 3, rng) == few);
  CHECK(farthest_point_sample(few, 0, rng).cols() == 0);
  CHECK_THROWS_AS(farthest_point_sample(Eigen::Matrix3Xd(3, 0), 2, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(farthest_point_sample(few, -1, rng), std::invalid_argument);

  // Three collinear points, subsampled to two: seeding at an endpoint must
  // select both endpoints (the midpoint is never farthest).
  Eigen::Matrix3Xd line(3, 3);
  line << 0.0, 0.3, 1.0, 0, 0, 0, 0, 0, 0;
  std::uint64_t seed = 0;
  for (;; ++seed) {
    Rng probe(seed);
    if (probe.uniform_index(3) == 0) break;
  }
  Rng fps_rng(seed);
  const Eigen::Matrix3Xd sel = farthest_point_sample(line, 2, fps_rng);
  CHECK(sel.col(0) == line.col(0));
  CHECK(sel.col(1) == line.col(2));
}

TEST_CASE("farthest point sampling matches a brute-force greedy oracle") {
  // 3x3 grid on the unit square.
  Eigen::Matrix3Xd grid(3, 9);
  int c = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) grid.col(c++) = Eigen::Vector3d(i * 0.5, j * 0.5, 0.0);

  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    Rng rng(seed);
    const Eigen::Matrix3Xd got = farthest_point_sample(grid, 4, rng);

    Rng replay(seed);
    std::vector<int> sel = {static_cast<int>(replay.uniform_index(9))};
    while (sel.size() < 4) {
      int best = -1;
      double best_d = -1.0;
      for (int k = 0; k < 9; ++k) {
        double d = std::numeric_limits<double>::infinity();
        for (int s : sel) d = std::min(d, (grid.col(k) - grid.col(s)).squaredNorm());
        if (d > best_d) {
          best_d = d;
          best = k;
        }
      }
      sel.push_back(best);
    }
    for (int i = 0; i < 4; ++i) CHECK(got.col(i) == grid.col(sel[static_cast<std::size_t>(i)]));
  }
}

TEST_CASE("farthest point sampling spreads better than random subsets") {
  Rng rng(71);
  auto min_pairwise = [](const Eigen::Matrix3Xd& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < pts.cols(); ++i)
      for (Eigen::Index j = i + 1; j < pts.cols(); ++j)
        best = std::min(best, (pts.col(i) - pts.col(j)).norm());
    return best;
  };

  int strictly_better = 0;
  for (int scene = 0; scene < 100; ++scene) {
    Eigen::Matrix3Xd pts(3, 256);
    for (Eigen::Index i = 0; i < 256; ++i)
      pts.col(i) = Eigen::Vector3d(rng.uniform(), rng.uniform(), rng.uniform());

    const double fps_d = min_pairwise(farthest_point_sample(pts, 24, rng));

    Eigen::Matrix3Xd rnd(3, 24);
    std::set<std::uint64_t> used;
    Eigen::Index k = 0;
    while (k < 24) {
      const std::uint64_t idx = rng.uniform_index(256);
      if (used.insert(idx).second) rnd.col(k++) = pts.col(static_cast<Eigen::Index>(idx));
    }
    const double rnd_d = min_pairwise(rnd);
    CHECK(fps_d >= rnd_d);
    if (fps_d > rnd_d) ++strictly_better;
  }
  CHECK(strictly_better >= 95);
}

TEST_CASE("link segments cover the arm") {
  const KinematicChain chain = make_preset_chain("planar2");
  Eigen::Vector2d q(std::numbers::pi / 2.0, 0.0);
  const auto segs = link_segments(chain, q);
  REQUIRE(segs.size() == 3);  // two links plus the tip strut
  // +pi/2 about +y maps +x onto -z.
  CHECK(segs[0].first.isApprox(Eigen::Vector3d(0, 0, 0), 1e-12));
  CHECK(segs[0].second.isApprox(Eigen::Vector3d(0, 0, -0.5), 1e-12));
  CHECK(segs[1].second.isApprox(Eigen::Vector3d(0, 0, -0.9), 1e-12));

  const KinematicChain arm = make_preset_chain("srs7");
  const auto arm_segs = link_segments(arm, arm.mid_config());
  CHECK(arm_segs.size() == static_cast<std::size_t>(arm.n_dof() + 2));  // + finger struts
}

TEST_CASE("proprio reports FK plus the latched gripper") {
  const Env env{cheap(TaskId::kPickAnalog)};
  Rng rng(81);
  WorldState s = env.reset(rng);
  s = env.step(s, s.q, 0.8);
  const NodeState ns = env.proprio(s);
  CHECK(ns.gripper == 0.8);
  CHECK(ns.positions == forward_kinematics(env.chain(), s.q).positions);
}

TEST_CASE("scripted expert: reach succeeds on every attempt") {
  const Env env{cheap(TaskId::kReach)};
  Rng rng(1001);
  for (int i = 0; i < 100; ++i) {
    const Demonstration demo = scripted_expert(env, rng);
    CHECK(demo.success);
    CHECK(demo.task == "reach");
    REQUIRE(!demo.frames.empty());
    CHECK(static_cast<int>(demo.frames.size()) <= env.spec().max_steps);
  }
}

TEST_CASE("scripted expert succeeds on the spatial tasks") {
  Rng rng(1002);
  for (auto id : {TaskId::kObstacleReach, TaskId::kElbowPush, TaskId::kPickAnalog}) {
    const Env env{cheap(id)};
    for (int i = 0; i < 10; ++i) {
      const Demonstration demo = scripted_expert(env, rng);
      CHECK(demo.success);
      CHECK(demo.task == task_name(id));
      for (const DemoFrame& f : demo.frames) {
        CHECK(f.cloud.cols() == env.spec().cloud_points);
        CHECK(f.proprio.positions.cols() == env.chain().n_nodes());
        CHECK(f.action.positions.cols() == env.chain().n_nodes());
      }
    }
  }
}

TEST_CASE("scripted expert actions are feasible node states") {
  const Env env{cheap(TaskId::kElbowPush)};
  Rng rng(1003);
  const Demonstration demo = scripted_expert(env, rng);
  const IkWeights w = IkWeights::uniform(env.chain().n_nodes());
  JointVector hint = env.spec().home_q;
  for (std::size_t i = 0; i < demo.frames.size(); i += 5) {
    const double err = ik_error(env.chain(), demo.frames[i].action.positions, w, hint);
    CHECK(err <= kFeasibilityTol);
  }
}

TEST_CASE("scripted expert demos are reproducible from the rng") {
  const Env env{cheap(TaskId::kPickAnalog)};
  Rng ra(1004), rb(1004);
  const Demonstration da = scripted_expert(env, ra), db = scripted_expert(env, rb);
  REQUIRE(da.frames.size() == db.frames.size());
  CHECK(da.seed == db.seed);
  for (std::size_t i = 0; i < da.frames.size(); ++i) {
    CHECK(da.frames[i].cloud == db.frames[i].cloud);
    CHECK(da.frames[i].action.positions == db.frames[i].action.positions);
    CHECK(da.frames[i].action.gripper == db.frames[i].action.gripper);
  }
}

TEST_CASE("replaying a demo's actions reproduces its success") {
  const Env env{cheap(TaskId::kReach)};
  Rng rng(1005);
  const IkWeights w = IkWeights::uniform(env.chain().n_nodes());
  for (int i = 0; i < 10; ++i) {
    const Demonstration demo = scripted_expert(env, rng);
    Rng ep(demo.seed);
    WorldState s = env.reset(ep);
    JointVector q = s.q;
    for (const DemoFrame& f : demo.frames) {
      q = solve_ik(env.chain(), f.action.positions, w, q);
      s = env.step(s, q, f.action.gripper);
    }
    CHECK(env.check_success(s));
  }
}

TEST_CASE("elbow-push demos keep the fingers clear while pressing") {
  const Env env{cheap(TaskId::kElbowPush)};
  const TaskSpec& spec = env.spec();
  Rng rng(1006);
  const Demonstration demo = scripted_expert(env, rng);
  Rng ep(demo.seed);
  const Eigen::Vector3d button = env.reset(ep).object_center;

  bool pressed_somewhere = false;
  for (const DemoFrame& f : demo.frames) {
    const double elbow_d = (f.action.positions.col(spec.elbow_node) - button).norm();
    double finger_d = std::numeric_limits<double>::infinity();
    for (int k : spec.ee_nodes)
      finger_d = std::min(finger_d, (f.action.positions.col(k) - button).norm());
    if (elbow_d <= spec.press_radius) {
      pressed_somewhere = true;
      CHECK(finger_d >= spec.finger_clearance);
    }
  }
  CHECK(pressed_somewhere);
}
