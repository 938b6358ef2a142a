#include "r2vr/mesh.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace r2vr {

double TriangleMesh::triangle_area(std::size_t t) const {
  return 0.5 * (corner(t, 1) - corner(t, 0)).cross(corner(t, 2) - corner(t, 0)).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t t) const {
  const Vec3 n = (corner(t, 1) - corner(t, 0)).cross(corner(t, 2) - corner(t, 0));
  const double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3::Zero();
}

Bounds TriangleMesh::bounds() const {
  Bounds b;
  for (const auto& v : vertices) b.expand(v);
  return b;
}

double TriangleMesh::enclosed_volume() const {
  double v = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    v += corner(t, 0).dot(corner(t, 1).cross(corner(t, 2)));
  }
  return v / 6.0;
}

void TriangleMesh::validate(double min_area) const {
  if (!face_labels.empty() && face_labels.size() != triangles.size()) {
    throw InvalidArgument("face label count does not match triangle count");
  }
  for (const auto& v : vertices)
    if (!v.allFinite()) throw InvalidArgument("mesh vertex is not finite");
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (auto idx : triangles[t])
      if (idx >= vertices.size()) throw InvalidArgument("triangle " + std::to_string(t) + " index out of range");
    if (triangle_area(t) < min_area) throw InvalidArgument("triangle " + std::to_string(t) + " has near-zero area");
  }
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto offset = static_cast<std::uint32_t>(vertices.size());
  const bool labels = !face_labels.empty() || !other.face_labels.empty();
  if (labels && face_labels.empty()) face_labels.assign(triangles.size(), std::string{});
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  for (const auto& t : other.triangles) triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  if (labels) {
    if (other.face_labels.empty()) {
      face_labels.resize(triangles.size());
    } else {
      face_labels.insert(face_labels.end(), other.face_labels.begin(), other.face_labels.end());
    }
  }
}

TriangleMesh make_box_mesh(const Vec3& lo, const Vec3& hi, const std::string& label) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(), (i & 4) ? hi.z() : lo.z());
  }
  // Outward-facing, counter-clockwise.
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  if (!label.empty()) m.face_labels.assign(m.triangles.size(), label);
  return m;
}

TriangleMesh make_icosphere(int levels, double radius, const Vec3& center) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < levels; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const auto id = static_cast<std::uint32_t>(v.size() - 1);
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const auto a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.triangles = std::move(f);
  return m;
}

TriangleMesh make_cylinder(double radius, double height, int segments, int rings, const Vec3& base) {
  TriangleMesh m;
  for (int r = 0; r <= rings; ++r) {
    const double z = height * double(r) / double(rings);
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * double(s) / double(segments);
      m.vertices.push_back(base + Vec3(radius * std::cos(a), radius * std::sin(a), z));
    }
  }
  auto id = [&](int r, int s) { return static_cast<std::uint32_t>(r * segments + (s % segments)); };
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({id(r, s), id(r, s + 1), id(r + 1, s + 1)});
      m.triangles.push_back({id(r, s), id(r + 1, s + 1), id(r + 1, s)});
    }
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.push_back(base);
  const auto top = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.push_back(base + Vec3(0, 0, height));
  for (int s = 0; s < segments; ++s) {
    m.triangles.push_back({bottom, id(0, s + 1), id(0, s)});
    m.triangles.push_back({top, id(rings, s), id(rings, s + 1)});
  }
  return m;
}

TriangleMesh make_grid_quad(double width, double height, int nx, int ny, double z) {
  TriangleMesh m;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.vertices.emplace_back(width * double(i) / nx, height * double(j) / ny, z);
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>(j * (nx + 1) + i); };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return m;
}

}  // namespace r2vr
