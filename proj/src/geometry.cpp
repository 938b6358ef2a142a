#include "r2vr/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace r2vr {

std::optional<double> intersect_ray_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                             const Vec3& c, double t_min, double t_max) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-15) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= t_min || t >= t_max) return std::nullopt;
  return t;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

double point_segment_distance(const Vec3& p, const Vec3& s0, const Vec3& s1) {
  const Vec3 d = s1 - s0;
  const double len2 = d.squaredNorm();
  if (len2 == 0.0) return (p - s0).norm();
  const double t = std::clamp((p - s0).dot(d) / len2, 0.0, 1.0);
  return (p - (s0 + t * d)).norm();
}

namespace {

template <typename Get>
PlaneFit fit_impl(std::size_t n, Get get) {
  PlaneFit f;
  if (n == 0) return f;
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) c += get(i);
  c /= double(n);
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = get(i) - c;
    cov.noalias() += d * d.transpose();
  }
  cov /= double(n);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  f.centroid = c;
  f.eigenvalues = es.eigenvalues();
  f.eigenvectors = es.eigenvectors();
  f.normal = es.eigenvectors().col(0).normalized();
  return f;
}

}  // namespace

PlaneFit fit_plane_pca(std::span<const Vec3> points) {
  return fit_impl(points.size(), [&](std::size_t i) -> const Vec3& { return points[i]; });
}

PlaneFit fit_plane_pca(std::span<const Vec3> points, std::span<const std::uint32_t> ids) {
  return fit_impl(ids.size(), [&](std::size_t i) -> const Vec3& { return points[ids[i]]; });
}

std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 u = helper.cross(n).normalized();
  const Vec3 v = n.cross(u);
  return {u, v};
}

}  // namespace r2vr
