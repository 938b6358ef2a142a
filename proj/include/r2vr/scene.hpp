#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "r2vr/mesh.hpp"
#include "r2vr/rigid_transform.hpp"

namespace r2vr {

enum class Variant : std::uint8_t { Both, A, B };

std::string to_string(Variant v);  // "both", "A", "B"
Variant variant_from_string(const std::string& s);

struct CollisionCapsule {
  Vec3 p0 = Vec3::Zero(), p1 = Vec3::Zero();
  double radius = 0.0;

  bool contains(const Vec3& p, double tol = 1e-9) const;
};

struct SceneNode {
  std::string name;
  RigidTransform transform;  // parent <- node; scale is always 1
  std::shared_ptr<const TriangleMesh> mesh;
  std::set<std::string> tags;
  Variant variant = Variant::Both;
  std::optional<CollisionCapsule> collision;  // in the node frame
  std::vector<SceneNode> children;
};

struct SceneGraph {
  SceneNode root;
  std::optional<Variant> resolved;  // set by select_variant

  std::size_t node_count() const;
  // Pre-order search by name across the whole tree.
  const SceneNode* find(const std::string& name) const;
  SceneNode* find(const std::string& name);
  bool has_variants() const;
  // Throws InvalidArgument on duplicate sibling names or empty names.
  void validate() const;
};

// ---- assembly

struct LabeledMesh {
  std::string id;
  TriangleMesh mesh;
};

struct HierarchyEntry {
  std::string name;
  std::string parent;   // empty: child of the root
  std::string mesh_id;  // empty: grouping node
  std::vector<std::string> tags;
  RigidTransform transform;
  bool collision = false;  // attach a fitted capsule
};

struct HierarchySpec {
  std::string root_name = "scene";
  std::vector<HierarchyEntry> entries;
};

// Builds the tree; node names must be unique across the spec so parents can
// be referenced by name. Throws InvalidArgument on duplicate names, unknown
// parents, parent cycles, missing mesh ids, and meshes referenced twice or
// never.
SceneGraph assemble(std::span<const LabeledMesh> meshes, const HierarchySpec& spec);

// ---- variants

// Thrown when two variant nodes do not share a footprint.
class FootprintMismatch : public InvalidArgument {
 public:
  FootprintMismatch(const std::string& what, const Vec3& delta_min, const Vec3& delta_max)
      : InvalidArgument(what), delta_min(delta_min), delta_max(delta_max) {}
  Vec3 delta_min, delta_max;  // bounds(b) - bounds(a)
};

// World-space bounds of the node's subtree meshes.
Bounds world_bounds(const SceneGraph& graph, const std::string& node);

// Marks node_a as variant A and node_b as variant B when their world bounds
// agree within tol per axis; pairing a node with itself changes nothing.
// Throws FootprintMismatch or InvalidArgument (missing node / mesh).
SceneGraph set_variant_pair(SceneGraph graph, const std::string& node_a, const std::string& node_b,
                            double tol = 1e-6);

// Drops the other variant's nodes (with their subtrees). Throws
// InvalidArgument when the graph has no variant nodes.
SceneGraph select_variant(const SceneGraph& graph, Variant which);

// ---- collision

// Principal axis through the vertex centroid, radius = max radial distance.
// Endpoints are the tightest axial positions that still contain every
// vertex. Throws InvalidArgument for a mesh without vertices.
CollisionCapsule fit_capsule(const TriangleMesh& mesh);

// ---- budget

struct BudgetReport {
  std::size_t triangle_count = 0;
  std::size_t polygon_budget = 450000;
  double refresh_hz = 90.0;
  double frame_budget_ms = 1000.0 / 90.0;
  bool pass = true;

  // Frame budget at 0.1 ms precision, as reported.
  double frame_budget_ms_rounded() const;
};

// Needs a resolved graph, or one without variant nodes.
BudgetReport budget_report(const SceneGraph& graph, double refresh_hz = 90.0, std::size_t polygon_budget = 450000);

// ---- glTF

// glTF 2.0: .glb writes the binary container, anything else a .gltf JSON
// plus a .bin buffer next to it. Throws IoError when the path is unwritable.
void export_scene(const SceneGraph& graph, const std::filesystem::path& path);
SceneGraph import_scene(const std::filesystem::path& path);

// Closed shelf carcass with one open face and evenly spaced inner boards,
// exactly filling [min, max].
TriangleMesh make_open_shelf(const Vec3& min, const Vec3& max, int open_axis, int open_sign, int shelves,
                             double board = 0.018);

}  // namespace r2vr
