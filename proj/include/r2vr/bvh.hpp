#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "r2vr/common.hpp"

namespace r2vr {

struct RayHit {
  double t = 0.0;
  std::uint32_t triangle = 0;
};

/// Median-split bounding volume hierarchy over a triangle soup.
class TriangleBvh {
 public:
  TriangleBvh() = default;
  explicit TriangleBvh(std::vector<std::array<Vec3, 3>> triangles);

  std::size_t size() const { return tris_.size(); }

  // Nearest hit with t in (t_min, t_max); ties resolve to the lower index.
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const;

 private:
  struct Node {
    Vec3 lo, hi;
    std::uint32_t first = 0;  // leaf: first primitive; inner: right child
    std::uint32_t count = 0;  // 0 for inner nodes
  };
  std::uint32_t build(std::uint32_t begin, std::uint32_t end);

  std::vector<std::array<Vec3, 3>> tris_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace r2vr
