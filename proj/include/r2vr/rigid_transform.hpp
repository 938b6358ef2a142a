#pragma once

#include <Eigen/Geometry>

#include <span>

#include "r2vr/common.hpp"

namespace r2vr {

/// Proper rigid motion x -> R x + t, meters.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation);
  static RigidTransform from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 apply_direction(const Vec3& d) const { return rotation_ * d; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }

  // (a * b)(x) = a(b(x))
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;

  // Orthonormality and det = +1 within tol.
  bool is_proper(double tol = 1e-9) const;

  // Largest absolute entry difference over rotation and translation.
  double max_abs_difference(const RigidTransform& other) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace r2vr
