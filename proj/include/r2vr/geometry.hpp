#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "r2vr/common.hpp"

namespace r2vr {

/// Möller–Trumbore; returns the ray parameter of the hit in (t_min, t_max).
std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                             const Vec3& c, double t_min, double t_max);

/// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

double point_segment_distance(const Vec3& p, const Vec3& s0, const Vec3& s1);

struct PlaneFit {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();         // eigenvector of the smallest eigenvalue
  Vec3 eigenvalues = Vec3::Zero();     // ascending
  Mat3 eigenvectors = Mat3::Identity();  // columns match eigenvalues
};

/// Principal-component fit over points (selected by `ids` when given).
PlaneFit fit_plane_pca(std::span<const Vec3> points);
PlaneFit fit_plane_pca(std::span<const Vec3> points, std::span<const std::uint32_t> ids);

/// Orthonormal (u, v) with u x v = n.
std::pair<Vec3, Vec3> plane_basis(const Vec3& n);

}  // namespace r2vr
