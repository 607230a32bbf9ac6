// Copyright 2026 The kadp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include "kadp/rng.hpp"

namespace kadp {

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;
};

// Axis-aligned box given by center and half extents.
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half = Eigen::Vector3d::Zero();
};

// Distance from p to the box (0 when p is inside).
double point_box_distance(const Eigen::Vector3d& p, const Box& box);

// Distance from p to the segment [a, b]; degenerate segments are points.
double segment_point_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                              const Eigen::Vector3d& p);

// Distance from the segment to the sphere surface; negative inside.
double segment_sphere_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                               const Sphere& s);

// Distance from the segment to the box (0 when they intersect).
double segment_box_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Box& box);

// n points drawn uniformly from the sphere surface.
Eigen::Matrix3Xd sample_sphere_surface(const Sphere& s, int n, Rng& rng);

// n points drawn uniformly (area-weighted over faces) from the box surface.
Eigen::Matrix3Xd sample_box_surface(const Box& b, int n, Rng& rng);

double sphere_surface_area(const Sphere& s);
double box_surface_area(const Box& b);

}  // namespace kadp
