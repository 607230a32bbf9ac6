// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/chain.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kadp/rng.hpp"

namespace kadp {

namespace {

void hash_doubles(std::uint64_t& h, const double* p, std::size_t n) {
  h = fnv1a_append(h, p, n * sizeof(double));
}

}  // namespace

KinematicChain::KinematicChain(std::vector<JointDescriptor> joints, Eigen::VectorXd limits_min,
                               Eigen::VectorXd limits_max, std::vector<NodeAnchor> node_anchors,
                               const Eigen::Isometry3d& base_pose, std::string name)
    : joints_(std::move(joints)),
      limits_min_(std::move(limits_min)),
      limits_max_(std::move(limits_max)),
      node_anchors_(std::move(node_anchors)),
      base_pose_(base_pose),
      name_(std::move(name)) {
  const int n = static_cast<int>(joints_.size());
  if (n == 0) throw std::invalid_argument("KinematicChain: no joints");
  if (limits_min_.size() != n || limits_max_.size() != n)
    throw std::invalid_argument("KinematicChain: limit size != n_dof");
  if (node_anchors_.empty()) throw std::invalid_argument("KinematicChain: no nodes");
  for (const auto& j : joints_) {
    if (std::abs(j.axis.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("KinematicChain: joint axis must have unit norm");
    if (!j.offset.allFinite()) throw std::invalid_argument("KinematicChain: non-finite offset");
  }
  for (int i = 0; i < n; ++i) {
    // Equality is allowed: a [a, a] interval freezes the joint, which some
    // tests and restricted training regions rely on.
    if (!(limits_min_[i] <= limits_max_[i]))
      throw std::invalid_argument("KinematicChain: limits_min must be <= limits_max");
  }
  for (const auto& a : node_anchors_) {
    if (a.joint < 0 || a.joint >= n)
      throw std::invalid_argument("KinematicChain: node anchor references invalid joint");
  }

  std::uint64_t h = fnv1a(&n, sizeof(n));
  for (const auto& j : joints_) {
    hash_doubles(h, j.axis.data(), 3);
    hash_doubles(h, j.offset.data(), 3);
  }
  hash_doubles(h, limits_min_.data(), limits_min_.size());
  hash_doubles(h, limits_max_.data(), limits_max_.size());
  for (const auto& a : node_anchors_) {
    h = fnv1a_append(h, &a.joint, sizeof(a.joint));
    hash_doubles(h, a.offset.data(), 3);
  }
  Eigen::Matrix4d m = base_pose_.matrix();
  hash_doubles(h, m.data(), 16);
  hash_ = h;
}

JointVector KinematicChain::clamp(const JointVector& q) const {
  return q.cwiseMax(limits_min_).cwiseMin(limits_max_);
}

bool KinematicChain::within_limits(const JointVector& q, double tol) const {
  if (q.size() != limits_min_.size()) return false;
  return (q.array() >= limits_min_.array() - tol).all() &&
         (q.array() <= limits_max_.array() + tol).all();
}

KinematicChain KinematicChain::with_node_subset(const std::vector<int>& node_indices) const {
  std::vector<NodeAnchor> sub;
  sub.reserve(node_indices.size());
  for (int idx : node_indices) {
    if (idx < 0 || idx >= n_nodes())
      throw std::invalid_argument("with_node_subset: node index out of range");
    sub.push_back(node_anchors_[static_cast<std::size_t>(idx)]);
  }
  return KinematicChain(joints_, limits_min_, limits_max_, std::move(sub), base_pose_,
                        name_ + "/subset");
}

KinematicChain KinematicChain::with_limits(const Eigen::VectorXd& lo,
                                           const Eigen::VectorXd& hi) const {
  if (lo.size() != limits_min_.size() || hi.size() != limits_max_.size())
    throw std::invalid_argument("with_limits: size mismatch");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (lo[i] < limits_min_[i] - 1e-12 || hi[i] > limits_max_[i] + 1e-12)
      throw std::invalid_argument("with_limits: region exceeds joint limits");
  }
  return KinematicChain(joints_, lo, hi, node_anchors_, base_pose_, name_ + "/restricted");
}

IkWeights::IkWeights(Eigen::VectorXd lambdas) : lambdas_(std::move(lambdas)) {
  if (lambdas_.size() == 0) throw std::invalid_argument("IkWeights: empty");
  if ((lambdas_.array() < 0.0).any())
    throw std::invalid_argument("IkWeights: weights must be nonnegative");
  if (!(lambdas_.array() > 0.0).any())
    throw std::invalid_argument("IkWeights: at least one weight must be positive");
}

IkWeights IkWeights::uniform(int n_nodes, double value) {
  return IkWeights(Eigen::VectorXd::Constant(n_nodes, value));
}

IkWeights IkWeights::subset(const std::vector<int>& node_indices) const {
  Eigen::VectorXd sub(static_cast<Eigen::Index>(node_indices.size()));
  for (std::size_t i = 0; i < node_indices.size(); ++i) {
    const int idx = node_indices[i];
    if (idx < 0 || idx >= lambdas_.size())
      throw std::invalid_argument("IkWeights::subset: index out of range");
    sub[static_cast<Eigen::Index>(i)] = lambdas_[idx];
  }
  return IkWeights(std::move(sub));
}

namespace {

using nlohmann::json;

Eigen::Vector3d vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(std::string("chain config: ") + what + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

KinematicChain parse_chain_json(const std::string& json_text, const std::string& name) {
  json root = json::parse(json_text);
  if (!root.contains("joints") || !root.contains("nodes"))
    throw std::invalid_argument("chain config: missing 'joints' or 'nodes'");

  std::vector<JointDescriptor> joints;
  std::vector<double> lo, hi;
  for (const auto& j : root.at("joints")) {
    JointDescriptor d;
    d.axis = vec3_from(j.at("axis"), "axis");
    d.offset = vec3_from(j.at("offset"), "offset");
    const auto& lim = j.at("limits");
    if (!lim.is_array() || lim.size() != 2)
      throw std::invalid_argument("chain config: limits must be [lo, hi]");
    lo.push_back(lim[0].get<double>());
    hi.push_back(lim[1].get<double>());
    joints.push_back(d);
  }

  std::vector<NodeAnchor> nodes;
  for (const auto& nj : root.at("nodes")) {
    NodeAnchor a;
    a.joint = nj.at("joint").get<int>();
    a.offset = vec3_from(nj.at("offset"), "offset");
    nodes.push_back(a);
  }

  Eigen::Isometry3d base = Eigen::Isometry3d::Identity();
  if (root.contains("base")) {
    const auto& b = root.at("base");
    if (b.contains("translation")) base.translation() = vec3_from(b.at("translation"), "translation");
    if (b.contains("rotation")) {
      const auto& r = b.at("rotation");
      if (!r.is_array() || r.size() != 9)
        throw std::invalid_argument("chain config: rotation must be 9 row-major entries");
      Eigen::Matrix3d R;
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) R(i, k) = r[static_cast<std::size_t>(3 * i + k)].get<double>();
      base.linear() = R;
    }
  }

  Eigen::Map<Eigen::VectorXd> limits_lo(lo.data(), static_cast<Eigen::Index>(lo.size()));
  Eigen::Map<Eigen::VectorXd> limits_hi(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return KinematicChain(std::move(joints), limits_lo, limits_hi, std::move(nodes), base, name);
}

KinematicChain load_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chain_json(ss.str(), path);
}

std::string chain_to_json(const KinematicChain& chain) {
  json root;
  root["joints"] = json::array();
  for (int i = 0; i < chain.n_dof(); ++i) {
    const auto& j = chain.joints()[static_cast<std::size_t>(i)];
    root["joints"].push_back({{"axis", {j.axis.x(), j.axis.y(), j.axis.z()}},
                              {"offset", {j.offset.x(), j.offset.y(), j.offset.z()}},
                              {"limits", {chain.limits_min()[i], chain.limits_max()[i]}}});
  }
  root["nodes"] = json::array();
  for (const auto& a : chain.node_anchors()) {
    root["nodes"].push_back(
        {{"joint", a.joint}, {"offset", {a.offset.x(), a.offset.y(), a.offset.z()}}});
  }
  const Eigen::Matrix3d R = chain.base_pose().linear();
  const Eigen::Vector3d t = chain.base_pose().translation();
  root["base"] = {{"translation", {t.x(), t.y(), t.z()}},
                  {"rotation",
                   {R(0, 0), R(0, 1), R(0, 2), R(1, 0), R(1, 1), R(1, 2), R(2, 0), R(2, 1),
                    R(2, 2)}}};
  return root.dump(2);
}

KinematicChain make_preset_chain(const std::string& preset) {
  const Eigen::Vector3d ux(1, 0, 0), uy(0, 1, 0), uz(0, 0, 1);

  if (preset == "srs7") {
    // Spherical shoulder (j1,j2), elbow (j3,j4) and wrist (j5,j6,j7 concurrent
    // at one point). Link lengths roughly Panda-scale. The wrist-center node
    // placement makes the classic arm self-motion invisible to the
    // {wrist, finger, finger} subset.
    std::vector<JointDescriptor> joints = {
        {uz, {0, 0, 0.333}},   // j1: base column
        {uy, {0, 0, 0.316}},   // j2: shoulder pitch -> upper arm
        {uz, {0, 0, 0.0}},     // j3: upper-arm roll
        {uy, {0, 0, 0.19}},    // j4: elbow -> forearm (proximal)
        {uz, {0, 0, 0.194}},   // j5: forearm roll -> wrist center
        {uy, {0, 0, 0.0}},     // j6: wrist pitch
        {uz, {0, 0, 0.126}},   // j7: flange roll -> tool
    };
    Eigen::VectorXd lo(7), hi(7);
    lo << -2.897, -1.763, -2.897, -2.45, -2.897, -2.45, -2.897;
    hi << 2.897, 1.763, 2.897, 2.45, 2.897, 2.45, 2.897;
    std::vector<NodeAnchor> nodes = {
        {0, {0.00, 0.05, 0.18}},   // n1: on the column, off the j1 axis
        {1, {0.00, 0.05, 0.16}},   // n2: upper arm
        {2, {0.05, 0.00, -0.10}},  // n3: upper arm, off the roll axis
        {3, {0.00, 0.05, 0.10}},   // n4: forearm (moves with the elbow)
        {4, {0.05, 0.00, 0.10}},   // n5: forearm, off the roll axis
        {5, {0.00, 0.00, 0.00}},   // n6: wrist center
        {6, {0.05, 0.00, 0.20}},   // n7: right finger
        {6, {-0.05, 0.00, 0.20}},  // n8: left finger
    };
    return KinematicChain(std::move(joints), lo, hi, std::move(nodes),
                          Eigen::Isometry3d::Identity(), "srs7");
  }

  if (preset == "planar2" || preset == "planar2w") {
    // Two links in the xz-plane, both joints about +y, links along +x.
    // planar2 restricts the elbow to a single branch; planar2w widens every
    // limit (test chain where clamping must never trigger).
    std::vector<JointDescriptor> joints = {
        {uy, {0.50, 0, 0}},  // shoulder -> elbow
        {uy, {0.40, 0, 0}},  // elbow -> tip
    };
    Eigen::VectorXd lo(2), hi(2);
    if (preset == "planar2") {
      lo << -2.2, 0.05;
      hi << 2.2, 3.0;
    } else {
      lo << -9.0, -9.0;
      hi << 9.0, 9.0;
    }
    std::vector<NodeAnchor> nodes = {
        {0, {0.50, 0, 0}},  // elbow point
        {1, {0.40, 0, 0}},  // tip point
    };
    return KinematicChain(std::move(joints), lo, hi, std::move(nodes),
                          Eigen::Isometry3d::Identity(), preset);
  }

  throw std::invalid_argument("unknown chain preset: " + preset);
}

IkWeights default_ik_weights(const KinematicChain& chain) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(chain.n_nodes());
  if (chain.name() == "srs7" && chain.n_nodes() == 8) {
    w[6] = 2.0;
    w[7] = 2.0;
  }
  return IkWeights(std::move(w));
}

std::vector<int> preset_node_subset(const KinematicChain& chain, const std::string& subset) {
  if (subset == "full") {
    std::vector<int> all(static_cast<std::size_t>(chain.n_nodes()));
    for (int i = 0; i < chain.n_nodes(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  if (chain.name() == "srs7") {
    if (subset == "node5") return {0, 3, 5, 6, 7};
    if (subset == "node3") return {5, 6, 7};
  }
  if (chain.name().rfind("planar2", 0) == 0) {
    if (subset == "node5") return {0, 1};
    if (subset == "node3") return {1};
  }
  throw std::invalid_argument("no subset '" + subset + "' for chain '" + chain.name() + "'");
}

}  // namespace kadp
