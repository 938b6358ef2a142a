#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "r2vr/common.hpp"
#include "r2vr/pointcloud.hpp"

namespace r2vr {

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  // Empty, or one label per triangle.
  std::vector<std::string> face_labels;

  std::size_t triangle_count() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }

  Vec3 corner(std::size_t t, int c) const { return vertices[triangles[t][c]]; }
  double triangle_area(std::size_t t) const;
  // Unit normal, zero for degenerate faces.
  Vec3 triangle_normal(std::size_t t) const;
  Bounds bounds() const;

  // Signed volume via the divergence theorem; meaningful for closed meshes.
  double enclosed_volume() const;

  // Indices in range, label count consistent, no face with area below
  // min_area. Throws InvalidArgument.
  void validate(double min_area = 1e-12) const;

  // Appends another mesh, offsetting indices.
  void append(const TriangleMesh& other);
};

TriangleMesh make_box_mesh(const Vec3& min, const Vec3& max, const std::string& label = {});

// Icosahedron subdivided `levels` times, projected onto a sphere.
TriangleMesh make_icosphere(int levels, double radius = 1.0, const Vec3& center = Vec3::Zero());

// Open cylinder side plus capped ends, axis along +z from `base`.
TriangleMesh make_cylinder(double radius, double height, int segments, int rings, const Vec3& base = Vec3::Zero());

// Axis-aligned rectangle in z = const tessellated into nx*ny quads (2 tris each).
TriangleMesh make_grid_quad(double width, double height, int nx, int ny, double z = 0.0);

}  // namespace r2vr
