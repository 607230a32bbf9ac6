// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/env.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace kadp {

std::string task_name(TaskId id) {
  switch (id) {
    case TaskId::kReach: return "reach";
    case TaskId::kObstacleReach: return "obstacle-reach";
    case TaskId::kElbowPush: return "elbow-push";
    case TaskId::kPickAnalog: return "pick-analog";
  }
  throw std::invalid_argument("task_name: bad TaskId");
}

TaskId task_from_name(const std::string& name) {
  if (name == "reach") return TaskId::kReach;
  if (name == "obstacle-reach") return TaskId::kObstacleReach;
  if (name == "elbow-push") return TaskId::kElbowPush;
  if (name == "pick-analog") return TaskId::kPickAnalog;
  throw std::invalid_argument("unknown task: " + name);
}

TaskSpec make_task_spec(TaskId id) {
  TaskSpec s;
  s.id = id;

  if (id == TaskId::kReach) {
    // Planar arm touching a floating target marker with its tip.
    s.chain_preset = "planar2";
    s.max_steps = 60;
    s.range_lo = {0.35, 0.0, -0.25};
    s.range_hi = {0.75, 0.0, 0.35};
    s.object_radius = 0.02;
    s.success_radius = 0.03;
    s.home_q = Eigen::Vector2d(0.0, 2.0);
    s.ee_nodes = {1};
    return s;
  }

  // The three spatial tasks share the 7-DoF arm and a bent-forward home.
  s.chain_preset = "srs7";
  Eigen::VectorXd home(7);
  home << 0.0, 0.4, 0.0, 0.9, 0.0, 0.7, 0.0;
  s.home_q = home;
  s.ee_nodes = {6, 7};

  if (id == TaskId::kObstacleReach) {
    // A slotted wall at x = 0.55: the tool must thread the gap (z in
    // [0.30, 0.58]) to touch a marker behind it. Home keeps the whole arm
    // above and behind the wall.
    s.max_steps = 120;
    home << 0.0, 0.2, 0.0, 0.4, 0.0, 0.3, 0.0;
    s.home_q = home;
    s.boxes = {{{0.55, 0.0, 0.16}, {0.015, 0.45, 0.14}},
               {{0.55, 0.0, 0.73}, {0.015, 0.45, 0.15}}};
    s.range_lo = {0.64, -0.12, 0.38};
    s.range_hi = {0.74, 0.12, 0.46};
    s.object_radius = 0.02;
    s.success_radius = 0.04;
  } else if (id == TaskId::kElbowPush) {
    // Press a floating button with the forearm pad while keeping the
    // fingers well clear of it.
    s.max_steps = 100;
    s.range_lo = {0.28, -0.10, 0.35};
    s.range_hi = {0.40, 0.10, 0.50};
    s.object_radius = 0.03;
    s.elbow_node = 3;
  } else {  // kPickAnalog
    // Grasp a ball from the table band and release it over the goal region.
    s.max_steps = 160;
    s.range_lo = {0.40, -0.15, 0.03};
    s.range_hi = {0.55, 0.15, 0.03};
    s.object_radius = 0.03;
    s.goal_center = {0.25, 0.30, 0.03};
    s.goal_radius = 0.05;
  }
  return s;
}

TaskSpec make_task_spec(const std::string& name) { return make_task_spec(task_from_name(name)); }

namespace {

using nlohmann::json;

json vec3_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument(std::string("task config: ") + what + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const char* where) {
  for (const auto& item : obj.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return item.key() == k; }))
      throw std::invalid_argument(std::string("task config: unknown key '") + item.key() +
                                  "' in " + where);
  }
}

}  // namespace

std::string task_spec_to_json(const TaskSpec& spec) {
  json root;
  root["task"] = task_name(spec.id);
  root["chain"] = spec.chain_preset;
  root["max_steps"] = spec.max_steps;
  root["substeps"] = spec.substeps;
  root["link_radius"] = spec.link_radius;
  root["range"] = {{"lo", vec3_json(spec.range_lo)}, {"hi", vec3_json(spec.range_hi)}};
  root["object_radius"] = spec.object_radius;
  root["boxes"] = json::array();
  for (const Box& b : spec.boxes)
    root["boxes"].push_back({{"center", vec3_json(b.center)}, {"half", vec3_json(b.half)}});
  root["success_radius"] = spec.success_radius;
  root["grasp_radius"] = spec.grasp_radius;
  root["press_radius"] = spec.press_radius;
  root["finger_clearance"] = spec.finger_clearance;
  root["goal"] = {{"center", vec3_json(spec.goal_center)}, {"radius", spec.goal_radius}};
  root["home_q"] = std::vector<double>(spec.home_q.data(), spec.home_q.data() + spec.home_q.size());
  root["ee_nodes"] = spec.ee_nodes;
  root["elbow_node"] = spec.elbow_node;
  root["cloud"] = {{"points", spec.cloud_points},
                   {"raw_samples", spec.cloud_raw_samples},
                   {"sigma", spec.cloud_sigma}};
  root["max_joint_step"] = spec.max_joint_step;
  return root.dump(2);
}

TaskSpec parse_task_spec_json(const std::string& text) {
  json root = json::parse(text);
  if (!root.is_object() || !root.contains("task"))
    throw std::invalid_argument("task config: missing 'task'");
  reject_unknown_keys(root,
                      {"task", "chain", "max_steps", "substeps", "link_radius", "range",
                       "object_radius", "boxes", "success_radius", "grasp_radius", "press_radius",
                       "finger_clearance", "goal", "home_q", "ee_nodes", "elbow_node", "cloud",
                       "max_joint_step"},
                      "task config");

  TaskSpec spec = make_task_spec(root.at("task").get<std::string>());
  if (root.contains("chain")) spec.chain_preset = root.at("chain").get<std::string>();
  if (root.contains("max_steps")) spec.max_steps = root.at("max_steps").get<int>();
  if (root.contains("substeps")) spec.substeps = root.at("substeps").get<int>();
  if (root.contains("link_radius")) spec.link_radius = root.at("link_radius").get<double>();
  if (root.contains("range")) {
    const json& r = root.at("range");
    reject_unknown_keys(r, {"lo", "hi"}, "range");
    if (!r.contains("lo") || !r.contains("hi"))
      throw std::invalid_argument("task config: range needs both 'lo' and 'hi'");
    spec.range_lo = vec3_from(r.at("lo"), "range.lo");
    spec.range_hi = vec3_from(r.at("hi"), "range.hi");
  }
  if (root.contains("object_radius")) spec.object_radius = root.at("object_radius").get<double>();
  if (root.contains("boxes")) {
    spec.boxes.clear();
    for (const json& b : root.at("boxes")) {
      reject_unknown_keys(b, {"center", "half"}, "boxes[]");
      if (!b.contains("center") || !b.contains("half"))
        throw std::invalid_argument("task config: box needs 'center' and 'half'");
      spec.boxes.push_back({vec3_from(b.at("center"), "box center"),
                            vec3_from(b.at("half"), "box half")});
    }
  }
  if (root.contains("success_radius"))
    spec.success_radius = root.at("success_radius").get<double>();
  if (root.contains("grasp_radius")) spec.grasp_radius = root.at("grasp_radius").get<double>();
  if (root.contains("press_radius")) spec.press_radius = root.at("press_radius").get<double>();
  if (root.contains("finger_clearance"))
    spec.finger_clearance = root.at("finger_clearance").get<double>();
  if (root.contains("goal")) {
    const json& g = root.at("goal");
    reject_unknown_keys(g, {"center", "radius"}, "goal");
    if (!g.contains("center") || !g.contains("radius"))
      throw std::invalid_argument("task config: goal needs 'center' and 'radius'");
    spec.goal_center = vec3_from(g.at("center"), "goal.center");
    spec.goal_radius = g.at("radius").get<double>();
  }
  if (root.contains("home_q")) {
    const auto vals = root.at("home_q").get<std::vector<double>>();
    spec.home_q = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                    static_cast<Eigen::Index>(vals.size()));
  }
  if (root.contains("ee_nodes")) spec.ee_nodes = root.at("ee_nodes").get<std::vector<int>>();
  if (root.contains("elbow_node")) spec.elbow_node = root.at("elbow_node").get<int>();
  if (root.contains("cloud")) {
    const json& c = root.at("cloud");
    reject_unknown_keys(c, {"points", "raw_samples", "sigma"}, "cloud");
    if (c.contains("points")) spec.cloud_points = c.at("points").get<int>();
    if (c.contains("raw_samples")) spec.cloud_raw_samples = c.at("raw_samples").get<int>();
    if (c.contains("sigma")) spec.cloud_sigma = c.at("sigma").get<double>();
  }
  if (root.contains("max_joint_step"))
    spec.max_joint_step = root.at("max_joint_step").get<double>();
  return spec;
}

TaskSpec load_task_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_task_spec: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_task_spec_json(ss.str());
}

void save_task_spec(const TaskSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_task_spec: cannot open " + path);
  out << task_spec_to_json(spec) << "\n";
}

Eigen::Matrix3Xd farthest_point_sample(const Eigen::Matrix3Xd& points, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("farthest_point_sample: n < 0");
  if (n == 0) return Eigen::Matrix3Xd(3, 0);
  const Eigen::Index total = points.cols();
  if (total == 0) throw std::invalid_argument("farthest_point_sample: empty input");
  if (total <= n) return points;

  std::vector<Eigen::Index> selected;
  selected.reserve(static_cast<std::size_t>(n));
  const Eigen::Index seed =
      static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(total)));
  selected.push_back(seed);

  Eigen::VectorXd min_d2 =
      (points.colwise() - points.col(seed)).colwise().squaredNorm().transpose();
  while (selected.size() < static_cast<std::size_t>(n)) {
    Eigen::Index next = 0;
    min_d2.maxCoeff(&next);
    selected.push_back(next);
    const Eigen::VectorXd d2 =
        (points.colwise() - points.col(next)).colwise().squaredNorm().transpose();
    min_d2 = min_d2.cwiseMin(d2);
  }

  Eigen::Matrix3Xd out(3, n);
  for (int i = 0; i < n; ++i) out.col(i) = points.col(selected[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> link_segments(
    const KinematicChain& chain, const JointVector& q) {
  const Eigen::Matrix3Xd origins = joint_frame_origins(chain, q);
  const Eigen::Matrix3Xd nodes = forward_kinematics(chain, q).positions;
  const int n = chain.n_dof();

  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> segs;
  for (int i = 0; i < n; ++i) segs.emplace_back(origins.col(i), origins.col(i + 1));
  // Struts from the flange out to tool nodes (e.g. the fingers).
  for (int k = 0; k < chain.n_nodes(); ++k) {
    if (chain.node_anchors()[static_cast<std::size_t>(k)].joint == n - 1)
      segs.emplace_back(origins.col(n), nodes.col(k));
  }
  return segs;
}

Env::Env(TaskSpec spec) : spec_(std::move(spec)), chain_(make_preset_chain(spec_.chain_preset)) {
  if (spec_.home_q.size() != chain_.n_dof())
    throw std::invalid_argument("Env: home_q size != chain n_dof");
  if (!chain_.within_limits(spec_.home_q))
    throw std::invalid_argument("Env: home_q outside joint limits");
  if (spec_.substeps < 1) throw std::invalid_argument("Env: substeps must be >= 1");
  if (spec_.max_steps < 1) throw std::invalid_argument("Env: max_steps must be >= 1");
  if (spec_.link_radius <= 0.0) throw std::invalid_argument("Env: link_radius must be > 0");
  if (spec_.cloud_points < 1 || spec_.cloud_raw_samples < spec_.cloud_points)
    throw std::invalid_argument("Env: need cloud_raw_samples >= cloud_points >= 1");
  if (spec_.cloud_sigma < 0.0) throw std::invalid_argument("Env: cloud_sigma must be >= 0");
  if ((spec_.range_hi - spec_.range_lo).minCoeff() < 0.0)
    throw std::invalid_argument("Env: range_lo must be <= range_hi");
  if (spec_.ee_nodes.empty()) throw std::invalid_argument("Env: ee_nodes must be non-empty");
  for (int k : spec_.ee_nodes)
    if (k < 0 || k >= chain_.n_nodes()) throw std::invalid_argument("Env: bad ee_node index");
  if (spec_.id == TaskId::kElbowPush &&
      (spec_.elbow_node < 0 || spec_.elbow_node >= chain_.n_nodes()))
    throw std::invalid_argument("Env: elbow-push needs a valid elbow_node");
  if (robot_collides(spec_.home_q))
    throw std::invalid_argument("Env: home configuration collides with the scene");
}

WorldState Env::reset(Rng& rng) const {
  WorldState state;
  state.q = spec_.home_q;
  for (int d = 0; d < 3; ++d)
    state.object_center[d] = rng.uniform(spec_.range_lo[d], spec_.range_hi[d]);
  return state;
}

bool Env::robot_collides(const JointVector& q) const {
  if (spec_.boxes.empty()) return false;
  const auto segs = link_segments(chain_, q);
  for (const auto& [a, b] : segs)
    for (const Box& box : spec_.boxes)
      if (segment_box_distance(a, b, box) < spec_.link_radius) return true;
  return false;
}

Eigen::Vector3d Env::ee_center(const JointVector& q) const {
  const Eigen::Matrix3Xd pos = forward_kinematics(chain_, q).positions;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int k : spec_.ee_nodes) c += pos.col(k);
  return c / static_cast<double>(spec_.ee_nodes.size());
}

WorldState Env::step(const WorldState& state, const JointVector& command,
                     double gripper_command) const {
  if (command.size() != chain_.n_dof())
    throw std::invalid_argument("Env::step: command size != n_dof");
  if (!command.allFinite()) throw std::invalid_argument("Env::step: non-finite command");
  if (!chain_.within_limits(command, 1e-9))
    throw std::invalid_argument("Env::step: command outside joint limits");
  if (!(gripper_command >= 0.0 && gripper_command <= 1.0))
    throw std::invalid_argument("Env::step: gripper command outside [0, 1]");

  WorldState out = state;
  out.step_count = state.step_count + 1;
  if (state.collision) return out;  // frozen for the rest of the episode

  // Sweep the motion: collision anywhere along the interpolated path freezes
  // the arm at its pre-step configuration.
  for (int i = 1; i <= spec_.substeps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(spec_.substeps);
    if (robot_collides(state.q + t * (command - state.q))) {
      out.collision = true;
      return out;
    }
  }

  out.q = command;
  out.gripper = gripper_command;

  if (spec_.id == TaskId::kPickAnalog) {
    const Eigen::Vector3d ee_before = ee_center(state.q);
    const Eigen::Vector3d ee_after = ee_center(command);
    if (state.attached) out.object_center = state.object_center + (ee_after - ee_before);
    const bool closed = gripper_command >= 0.5;
    if (out.attached && !closed) {
      out.attached = false;  // released: the object stays where it was dropped
    } else if (!out.attached && closed &&
               (ee_after - out.object_center).norm() <= spec_.grasp_radius) {
      out.attached = true;
    }
  }

  if (spec_.id == TaskId::kElbowPush && !out.pressed) {
    const Eigen::Matrix3Xd pos = forward_kinematics(chain_, command).positions;
    const double elbow_d = (pos.col(spec_.elbow_node) - out.object_center).norm();
    double finger_d = std::numeric_limits<double>::infinity();
    for (int k : spec_.ee_nodes)
      finger_d = std::min(finger_d, (pos.col(k) - out.object_center).norm());
    if (elbow_d <= spec_.press_radius && finger_d >= spec_.finger_clearance) out.pressed = true;
  }
  return out;
}

Eigen::Matrix3Xd Env::render_pointcloud(const WorldState& state, Rng& rng) const {
  std::vector<Sphere> spheres = {{state.object_center, spec_.object_radius}};
  if (spec_.id == TaskId::kPickAnalog) spheres.push_back({spec_.goal_center, 0.02});

  std::vector<double> areas;
  for (const Sphere& s : spheres) areas.push_back(sphere_surface_area(s));
  for (const Box& b : spec_.boxes) areas.push_back(box_surface_area(b));
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  if (total <= 0.0) throw std::logic_error("render_pointcloud: no surface area to sample");

  // Largest-remainder allocation of the raw sample budget across primitives.
  const int raw = spec_.cloud_raw_samples;
  std::vector<int> counts(areas.size(), 0);
  std::vector<std::pair<double, std::size_t>> frac;
  int assigned = 0;
  for (std::size_t i = 0; i < areas.size(); ++i) {
    const double exact = raw * areas[i] / total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    frac.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < raw - assigned; ++r) ++counts[frac[static_cast<std::size_t>(r)].second];

  Eigen::Matrix3Xd raw_cloud(3, raw);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    raw_cloud.middleCols(col, counts[i]) = sample_sphere_surface(spheres[i], counts[i], rng);
    col += counts[i];
  }
  for (std::size_t i = 0; i < spec_.boxes.size(); ++i) {
    const int c = counts[spheres.size() + i];
    raw_cloud.middleCols(col, c) = sample_box_surface(spec_.boxes[i], c, rng);
    col += c;
  }

  if (spec_.cloud_sigma > 0.0)
    raw_cloud += spec_.cloud_sigma * rng.normal_matrix(3, raw);

  return farthest_point_sample(raw_cloud, spec_.cloud_points, rng);
}

bool Env::check_success(const WorldState& state) const {
  if (state.collision) return false;
  switch (spec_.id) {
    case TaskId::kReach:
    case TaskId::kObstacleReach:
      return (ee_center(state.q) - state.object_center).norm() <= spec_.success_radius;
    case TaskId::kElbowPush:
      return state.pressed;
    case TaskId::kPickAnalog:
      return !state.attached &&
             (state.object_center - spec_.goal_center).norm() <= spec_.goal_radius;
  }
  return false;
}

NodeState Env::proprio(const WorldState& state) const {
  return forward_kinematics(chain_, state.q, state.gripper);
}

}  // namespace kadp
