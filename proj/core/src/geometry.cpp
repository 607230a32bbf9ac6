// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#include "kadp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kadp {

double point_box_distance(const Eigen::Vector3d& p, const Box& box) {
  const Eigen::Vector3d d =
      ((p - box.center).cwiseAbs() - box.half).cwiseMax(Eigen::Vector3d::Zero());
  return d.norm();
}

double segment_point_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                              const Eigen::Vector3d& p) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double segment_sphere_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Sphere& s) {
  return segment_point_distance(a, b, s.center) - s.radius;
}

double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Box& box) {
  // t -> dist(a + t(b-a), box) is convex (distance to a convex set along an
  // affine path), so golden-section search converges to the minimum.
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 0.0, hi = 1.0;
  double t1 = hi - kInvPhi * (hi - lo);
  double t2 = lo + kInvPhi * (hi - lo);
  auto at = [&](double t) { return point_box_distance(a + t * (b - a), box); };
  double f1 = at(t1), f2 = at(t2);
  for (int it = 0; it < 80; ++it) {
    if (f1 <= f2) {
      hi = t2;
      t2 = t1;
      f2 = f1;
      t1 = hi - kInvPhi * (hi - lo);
      f1 = at(t1);
    } else {
      lo = t1;
      t1 = t2;
      f1 = f2;
      t2 = lo + kInvPhi * (hi - lo);
      f2 = at(t2);
    }
  }
  return std::min({f1, f2, at(0.0), at(1.0)});
}

Eigen::Matrix3Xd sample_sphere_surface(const Sphere& s, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("sample_sphere_surface: n < 0");
  Eigen::Matrix3Xd out(3, n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d dir;
    do {
      dir = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    } while (dir.squaredNorm() < 1e-12);
    out.col(i) = s.center + s.radius * dir.normalized();
  }
  return out;
}

Eigen::Matrix3Xd sample_box_surface(const Box& b, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("sample_box_surface: n < 0");
  const Eigen::Vector3d& h = b.half;
  // Face areas for the +/-x, +/-y, +/-z pairs.
  const double ax = 4.0 * h.y() * h.z();
  const double ay = 4.0 * h.x() * h.z();
  const double az = 4.0 * h.x() * h.y();
  const double total = 2.0 * (ax + ay + az);
  if (total <= 0.0) throw std::invalid_argument("sample_box_surface: degenerate box");

  Eigen::Matrix3Xd out(3, n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    int axis = 0;
    for (double area : {ax, ax, ay, ay, az, az}) {
      if (u < area) break;
      u -= area;
      ++axis;
    }
    axis = std::min(axis, 5);  // guard against accumulated rounding at u ~ total
    const int dim = axis / 2;
    const double sign = (axis % 2 == 0) ? 1.0 : -1.0;
    Eigen::Vector3d p;
    for (int d = 0; d < 3; ++d)
      p[d] = (d == dim) ? sign * h[d] : rng.uniform(-h[d], h[d]);
    out.col(i) = b.center + p;
  }
  return out;
}

double sphere_surface_area(const Sphere& s) {
  return 4.0 * std::numbers::pi * s.radius * s.radius;
}

double box_surface_area(const Box& b) {
  const Eigen::Vector3d& h = b.half;
  return 8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
}

}  // namespace kadp
