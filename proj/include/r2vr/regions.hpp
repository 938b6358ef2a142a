#pragma once

#include <array>
#include <optional>
#include <string>

#include "r2vr/common.hpp"

namespace r2vr {

/// Closed axis-aligned box, meters.
struct CropBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool valid() const { return (min.array() <= max.array()).all() && min.allFinite() && max.allFinite(); }
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
};

/// Planar rectangle declared as reflective (window pane, appliance door).
class SpecularRegion {
 public:
  // Corners in order around the rectangle. Throws InvalidArgument unless
  // they are coplanar and consecutive edges are perpendicular (1e-6).
  SpecularRegion(const std::array<Vec3, 4>& corners, std::string label);

  const std::array<Vec3, 4>& corners() const { return corners_; }
  const std::string& label() const { return label_; }
  const Vec3& normal() const { return normal_; }

  // Parameter distance along origin->p at which the segment crosses the
  // rectangle, if it does.
  std::optional<double> segment_crossing(const Vec3& origin, const Vec3& p) const;

 private:
  std::array<Vec3, 4> corners_;
  std::string label_;
  Vec3 normal_;
  Vec3 edge_u_, edge_v_;
  double len_u_ = 0, len_v_ = 0;
};

}  // namespace r2vr
