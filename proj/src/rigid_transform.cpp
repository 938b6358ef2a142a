#include "r2vr/rigid_transform.hpp"

#include <algorithm>
#include <cmath>

namespace r2vr {

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidArgument("rigid transform has non-finite entries");
  }
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Vec3& translation) {
  if (q.norm() < 1e-12) throw InvalidArgument("zero quaternion");
  return {q.normalized().toRotationMatrix(), translation};
}

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& translation) {
  if (axis.norm() < 1e-12) throw InvalidArgument("zero rotation axis");
  return {Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(), translation};
}

Eigen::Quaterniond RigidTransform::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation_ = rotation_ * other.rotation_;
  out.translation_ = rotation_ * other.translation_ + translation_;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

bool RigidTransform::is_proper(double tol) const {
  const Mat3 gram = rotation_.transpose() * rotation_;
  return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(rotation_.determinant() - 1.0) <= tol;
}

double RigidTransform::max_abs_difference(const RigidTransform& other) const {
  return std::max((rotation_ - other.rotation_).cwiseAbs().maxCoeff(),
                  (translation_ - other.translation_).cwiseAbs().maxCoeff());
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  const Vec3 axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (rel.trace() - 1.0));
}

}  // namespace r2vr
