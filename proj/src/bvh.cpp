#include "r2vr/bvh.hpp"

#include <algorithm>

#include "r2vr/geometry.hpp"

namespace r2vr {

namespace {

bool ray_box(const Vec3& o, const Vec3& inv, const Vec3& lo, const Vec3& hi, double t_min, double t_max) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (lo[a] - o[a]) * inv[a];
    double t1 = (hi[a] - o[a]) * inv[a];
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_max < t_min) return false;
  }
  return true;
}

}  // namespace

TriangleBvh::TriangleBvh(std::vector<std::array<Vec3, 3>> triangles) : tris_(std::move(triangles)) {
  order_.resize(tris_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!tris_.empty()) build(0, static_cast<std::uint32_t>(tris_.size()));
}

std::uint32_t TriangleBvh::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({});
  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  Vec3 clo = lo, chi = hi;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (const auto& v : tris_[order_[i]]) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    const Vec3 c = (tris_[order_[i]][0] + tris_[order_[i]][1] + tris_[order_[i]][2]) / 3.0;
    clo = clo.cwiseMin(c);
    chi = chi.cwiseMax(c);
  }
  // Pad so axis-parallel faces still have a volume.
  nodes_[id].lo = lo.array() - 1e-9;
  nodes_[id].hi = hi.array() + 1e-9;
  if (end - begin <= 4) {
    nodes_[id].first = begin;
    nodes_[id].count = end - begin;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = tris_[a][0][axis] + tris_[a][1][axis] + tris_[a][2][axis];
                     const double cb = tris_[b][0][axis] + tris_[b][1][axis] + tris_[b][2][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  build(begin, mid);
  const std::uint32_t right = build(mid, end);
  nodes_[id].first = right;
  nodes_[id].count = 0;
  return id;
}

std::optional<RayHit> TriangleBvh::intersect(const Vec3& origin, const Vec3& dir, double t_min,
                                             double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  std::optional<RayHit> best;
  double limit = t_max;
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (!ray_box(origin, inv, n.lo, n.hi, t_min, limit)) continue;
    if (n.count > 0) {
      for (std::uint32_t i = n.first; i < n.first + n.count; ++i) {
        const std::uint32_t tri = order_[i];
        const auto& t = tris_[tri];
        // Slightly widened limit keeps exact ties so the lower index can win.
        if (auto hit = intersect_ray_triangle(origin, dir, t[0], t[1], t[2], t_min, limit * (1 + 1e-15) + 1e-300)) {
          if (!best || *hit < best->t || (*hit == best->t && tri < best->triangle)) {
            best = RayHit{*hit, tri};
            limit = *hit;
          }
        }
      }
    } else {
      const std::uint32_t left = static_cast<std::uint32_t>(&n - nodes_.data()) + 1;
      stack[top++] = n.first;
      stack[top++] = left;
    }
  }
  return best;
}

}  // namespace r2vr
