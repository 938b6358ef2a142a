#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>

namespace r2vr {

using Vec2 = Eigen::Vector2d;

// Andrew's monotone chain; counter-clockwise, collinear points dropped.
std::vector<Vec2> convex_hull(std::vector<Vec2> points);

// Signed shoelace area (positive for counter-clockwise).
double polygon_area(const std::vector<Vec2>& polygon);

struct Rectangle2 {
  std::array<Vec2, 4> corners;  // counter-clockwise
  double area = 0.0;
  Vec2 axis_u = Vec2::UnitX();  // unit edge direction corners[0] -> corners[1]
};

// Minimum-area enclosing rectangle of a convex polygon (rotating calipers).
// One of its sides is collinear with a hull edge. Needs >= 3 hull vertices.
Rectangle2 min_area_rectangle(const std::vector<Vec2>& hull);

}  // namespace r2vr
