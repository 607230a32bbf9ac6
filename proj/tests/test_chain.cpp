// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/chain.hpp"

#include <Eigen/Geometry>
#include <stdexcept>

#include "doctest.h"
#include "kadp/kinematics.hpp"

using namespace kadp;

namespace {

KinematicChain unit_planar(double l1 = 1.0, double l2 = 1.0) {
  const Eigen::Vector3d uz(0, 0, 1);
  std::vector<JointDescriptor> joints = {{uz, {l1, 0, 0}}, {uz, {l2, 0, 0}}};
  Eigen::VectorXd lo(2), hi(2);
  lo << -3.0, -3.0;
  hi << 3.0, 3.0;
  std::vector<NodeAnchor> nodes = {{0, {l1, 0, 0}}, {1, {l2, 0, 0}}};
  return KinematicChain(std::move(joints), lo, hi, std::move(nodes));
}

}  // namespace

TEST_CASE("constructor validates its invariants") {
  const Eigen::Vector3d uz(0, 0, 1);
  Eigen::VectorXd lo(1), hi(1);
  lo << -1.0;
  hi << 1.0;
  std::vector<NodeAnchor> nodes = {{0, {1, 0, 0}}};

  SUBCASE("non-unit axis") {
    std::vector<JointDescriptor> joints = {{{0, 0, 1.1}, {0, 0, 0}}};
    CHECK_THROWS_AS(KinematicChain(joints, lo, hi, nodes), std::invalid_argument);
  }
  SUBCASE("reversed limits") {
    std::vector<JointDescriptor> joints = {{uz, {0, 0, 0}}};
    CHECK_THROWS_AS(KinematicChain(joints, hi, lo, nodes), std::invalid_argument);
  }
  SUBCASE("degenerate limits are allowed (frozen joint)") {
    std::vector<JointDescriptor> joints = {{uz, {0, 0, 0}}};
    Eigen::VectorXd same(1);
    same << 0.7;
    CHECK_NOTHROW(KinematicChain(joints, same, same, nodes));
  }
  SUBCASE("node anchored to a missing joint") {
    std::vector<JointDescriptor> joints = {{uz, {0, 0, 0}}};
    std::vector<NodeAnchor> bad = {{3, {1, 0, 0}}};
    CHECK_THROWS_AS(KinematicChain(joints, lo, hi, bad), std::invalid_argument);
  }
  SUBCASE("no nodes") {
    std::vector<JointDescriptor> joints = {{uz, {0, 0, 0}}};
    CHECK_THROWS_AS(KinematicChain(joints, lo, hi, {}), std::invalid_argument);
  }
}

TEST_CASE("clamp and within_limits") {
  KinematicChain chain = unit_planar();
  Eigen::Vector2d q(5.0, -5.0);
  const JointVector c = chain.clamp(q);
  CHECK(c[0] == 3.0);
  CHECK(c[1] == -3.0);
  CHECK(chain.within_limits(c));
  CHECK_FALSE(chain.within_limits(q));
  CHECK(chain.within_limits(Eigen::Vector2d(3.0 + 1e-9, 0.0), 1e-8));
}

TEST_CASE("json round trip preserves every defining number") {
  KinematicChain chain = make_preset_chain("srs7");
  const std::string text = chain_to_json(chain);
  KinematicChain back = parse_chain_json(text, "srs7");
  CHECK(back.hash() == chain.hash());
  CHECK(back.n_dof() == chain.n_dof());
  CHECK(back.n_nodes() == chain.n_nodes());
}

TEST_CASE("json parser honors base pose and exact key names") {
  const char* text = R"({
    "joints": [{"axis": [0, 0, 1], "offset": [1, 0, 0], "limits": [-3, 3]}],
    "nodes": [{"joint": 0, "offset": [1, 0, 0]}],
    "base": {"translation": [0, 0, 0.5],
             "rotation": [0, -1, 0, 1, 0, 0, 0, 0, 1]}
  })";
  KinematicChain chain = parse_chain_json(text);
  Eigen::VectorXd q(1);
  q << 0.0;
  const Eigen::Vector3d p = forward_kinematics(chain, q).positions.col(0);
  // Base yaw of +90 deg maps the +x node to +y, raised by the translation.
  CHECK(p.isApprox(Eigen::Vector3d(0, 1, 0.5), 1e-12));

  CHECK_THROWS(parse_chain_json(R"({"nodes": []})"));
  CHECK_THROWS(parse_chain_json(
      R"({"joints": [{"axis": [0,0,1], "offset": [0,0,0], "limits": [-1]}], "nodes": []})"));
}

TEST_CASE("presets have the documented shape") {
  KinematicChain srs7 = make_preset_chain("srs7");
  CHECK(srs7.n_dof() == 7);
  CHECK(srs7.n_nodes() == 8);
  CHECK(srs7.within_limits(srs7.mid_config()));

  KinematicChain planar = make_preset_chain("planar2");
  CHECK(planar.n_dof() == 2);
  CHECK(planar.n_nodes() == 2);

  CHECK_THROWS(make_preset_chain("nope"));
}

TEST_CASE("node subsets select the documented anchors") {
  KinematicChain srs7 = make_preset_chain("srs7");
  const auto full = preset_node_subset(srs7, "full");
  CHECK(full.size() == 8);
  const auto node5 = preset_node_subset(srs7, "node5");
  CHECK(node5.size() == 5);
  const auto node3 = preset_node_subset(srs7, "node3");
  REQUIRE(node3.size() == 3);

  KinematicChain sub = srs7.with_node_subset(node3);
  CHECK(sub.n_nodes() == 3);
  CHECK(sub.n_dof() == 7);
  // The two finger nodes are part of every subset.
  CHECK(sub.node_anchors()[1].joint == 6);
  CHECK(sub.node_anchors()[2].joint == 6);

  CHECK_THROWS(srs7.with_node_subset({42}));
}

TEST_CASE("with_limits restricts and rejects widening") {
  KinematicChain planar = make_preset_chain("planar2");
  Eigen::Vector2d lo(-1.0, 0.5), hi(1.0, 2.5);
  KinematicChain tight = planar.with_limits(lo, hi);
  CHECK(tight.limits_min()[1] == 0.5);
  Eigen::Vector2d wide_hi(1.0, 99.0);
  CHECK_THROWS(planar.with_limits(lo, wide_hi));
}

TEST_CASE("hash discriminates geometry changes") {
  KinematicChain a = unit_planar(1.0, 1.0);
  KinematicChain b = unit_planar(1.0, 1.0 + 1e-9);
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == unit_planar().hash());
}

TEST_CASE("ik weights validate and subset") {
  CHECK_THROWS_AS(IkWeights(Eigen::Vector3d(-1, 1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(IkWeights(Eigen::Vector3d(0, 0, 0)), std::invalid_argument);

  IkWeights w(Eigen::Vector3d(1, 0, 2));
  CHECK(w[2] == 2.0);
  IkWeights sub = w.subset({2, 0});
  CHECK(sub.size() == 2);
  CHECK(sub[0] == 2.0);
  CHECK(sub[1] == 1.0);

  KinematicChain srs7 = make_preset_chain("srs7");
  IkWeights d = default_ik_weights(srs7);
  CHECK(d[0] == 1.0);
  CHECK(d[6] == 2.0);
  CHECK(d[7] == 2.0);
}

TEST_CASE("gripper flag thresholds at one half") {
  NodeState s;
  s.positions.resize(3, 1);
  s.gripper = 0.49;
  CHECK_FALSE(s.gripper_closed());
  s.gripper = 0.5;
  CHECK(s.gripper_closed());
}
