#include "r2vr/geometry2d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "r2vr/common.hpp"

namespace r2vr {

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

std::vector<Vec2> convex_hull(std::vector<Vec2> p) {
  std::sort(p.begin(), p.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

Rectangle2 min_area_rectangle(const std::vector<Vec2>& hull) {
  const std::size_t n = hull.size();
  if (n < 3) throw DegenerateConfiguration("min_area_rectangle needs a non-degenerate hull");
  Rectangle2 best;
  best.area = std::numeric_limits<double>::infinity();
  // Calipers: for edge i keep the antipodal (max along normal) and the two
  // extreme points along the edge direction, each advancing monotonically.
  std::size_t far = 1, right = 1, left = 0;
  const auto along = [&](std::size_t j, const Vec2& u) { return hull[j % n].dot(u); };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 e = hull[(i + 1) % n] - hull[i];
    const double len = e.norm();
    if (len == 0) continue;
    const Vec2 u = e / len;
    const Vec2 v(-u.y(), u.x());  // inward for a counter-clockwise hull
    const Vec2& o = hull[i];
    if (i == 0) {
      far = right = left = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if ((hull[j] - o).dot(v) > (hull[far] - o).dot(v)) far = j;
        if (hull[j].dot(u) > hull[right].dot(u)) right = j;
        if (hull[j].dot(u) < hull[left].dot(u)) left = j;
      }
    } else {
      for (std::size_t s = 0; s < n && (hull[(far + 1) % n] - o).dot(v) >= (hull[far] - o).dot(v); ++s) far = (far + 1) % n;
      for (std::size_t s = 0; s < n && along(right + 1, u) >= along(right, u); ++s) right = (right + 1) % n;
      for (std::size_t s = 0; s < n && along(left + 1, u) <= along(left, u); ++s) left = (left + 1) % n;
    }
    const double umin = hull[left % n].dot(u) - o.dot(u);
    const double umax = hull[right % n].dot(u) - o.dot(u);
    const double vmax = (hull[far % n] - o).dot(v);
    const double area = (umax - umin) * vmax;
    if (area < best.area) {
      best.area = area;
      best.axis_u = u;
      best.corners = {o + umin * u, o + umax * u, o + umax * u + vmax * v, o + umin * u + vmax * v};
    }
  }
  if (!std::isfinite(best.area)) throw DegenerateConfiguration("min_area_rectangle: hull has no proper edge");
  return best;
}

}  // namespace r2vr
