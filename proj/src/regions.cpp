#include "r2vr/regions.hpp"

#include <cmath>

namespace r2vr {

SpecularRegion::SpecularRegion(const std::array<Vec3, 4>& corners, std::string label)
    : corners_(corners), label_(std::move(label)) {
  for (const auto& c : corners_)
    if (!c.allFinite()) throw InvalidArgument("specular region '" + label_ + "' has non-finite corners");
  const Vec3 u = corners_[1] - corners_[0];
  const Vec3 v = corners_[3] - corners_[0];
  len_u_ = u.norm();
  len_v_ = v.norm();
  if (len_u_ < 1e-9 || len_v_ < 1e-9) throw InvalidArgument("specular region '" + label_ + "' is degenerate");
  edge_u_ = u / len_u_;
  edge_v_ = v / len_v_;
  normal_ = edge_u_.cross(edge_v_).normalized();
  for (int i = 0; i < 4; ++i) {
    const Vec3 e0 = corners_[(i + 1) % 4] - corners_[i];
    const Vec3 e1 = corners_[(i + 2) % 4] - corners_[(i + 1) % 4];
    if (std::abs(e0.dot(e1)) > 1e-6 * std::max(1.0, e0.norm() * e1.norm())) {
      throw InvalidArgument("specular region '" + label_ + "' edges are not perpendicular");
    }
    if (std::abs((corners_[i] - corners_[0]).dot(normal_)) > 1e-6) {
      throw InvalidArgument("specular region '" + label_ + "' corners are not coplanar");
    }
  }
}

std::optional<double> SpecularRegion::segment_crossing(const Vec3& origin, const Vec3& p) const {
  const Vec3 d = p - origin;
  const double denom = d.dot(normal_);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double s = (corners_[0] - origin).dot(normal_) / denom;
  if (s < 0.0 || s > 1.0) return std::nullopt;
  const Vec3 hit = origin + s * d;
  const double a = (hit - corners_[0]).dot(edge_u_);
  const double b = (hit - corners_[0]).dot(edge_v_);
  if (a < 0.0 || a > len_u_ || b < 0.0 || b > len_v_) return std::nullopt;
  return s * d.norm();
}

}  // namespace r2vr
