#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "r2vr/geometry.hpp"
#include "r2vr/scene.hpp"
#include "r2vr/simscan.hpp"

using namespace r2vr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("r2vr_scene_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TriangleMesh make_cylinder(double r, double h, int segments, int rings, const Vec3& axis, const Vec3& center) {
  const Vec3 a = axis.normalized();
  const Vec3 u = a.unitOrthogonal(), v = a.cross(u);
  TriangleMesh m;
  for (int k = 0; k <= rings; ++k)
    for (int s = 0; s < segments; ++s) {
      const double th = 2 * std::numbers::pi * s / segments;
      const double z = -h / 2 + h * k / rings;
      m.vertices.push_back(center + z * a + r * (std::cos(th) * u + std::sin(th) * v));
    }
  const auto idx = [&](int k, int s) { return static_cast<std::uint32_t>(k * segments + s % segments); };
  for (int k = 0; k < rings; ++k)
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({idx(k, s), idx(k, s + 1), idx(k + 1, s + 1)});
      m.triangles.push_back({idx(k, s), idx(k + 1, s + 1), idx(k + 1, s)});
    }
  return m;
}

// Entries mirror the synthetic kitchen: shell, counters, cabinets with an
// open-shelf twin, appliances.
struct KitchenFixture {
  std::vector<LabeledMesh> meshes;
  HierarchySpec spec;
};

KitchenFixture kitchen_fixture() {
  const KitchenScene k = synth_kitchen({}, 42);
  KitchenFixture f;
  f.meshes.push_back({"shell", make_box_mesh({0, 0, 0}, {4, 3.2, 2.6}, "wall")});
  f.spec.entries.push_back({"architecture", "", "", {"architecture"}, {}, false});
  f.spec.entries.push_back({"room_shell", "architecture", "shell", {"architecture"}, {}, false});
  for (const char* g : {"counters", "cabinets", "appliances"}) f.spec.entries.push_back({g, "", "", {g}, {}, false});
  for (const auto& fx : k.fixtures) {
    const std::string& tag = fx.tags.front();
    f.meshes.push_back({fx.name, make_box_mesh(fx.min, fx.max, tag)});
    const std::string group = tag == "counter" ? "counters" : tag == "cabinet" ? "cabinets" : "appliances";
    f.spec.entries.push_back({fx.name, group, fx.name, fx.tags, {}, tag != "cabinet"});
    if (tag == "cabinet") {
      const int axis = fx.max.y() - fx.min.y() < fx.max.x() - fx.min.x() ? 1 : 0;
      f.meshes.push_back({fx.name + "_open", make_open_shelf(fx.min, fx.max, axis, +1, 2)});
      f.spec.entries.push_back({fx.name + "_open", group, fx.name + "_open", fx.tags, {}, false});
    }
  }
  return f;
}

SceneGraph kitchen_graph() {
  auto f = kitchen_fixture();
  SceneGraph g = assemble(f.meshes, f.spec);
  for (const char* n : {"upper_cabinet_run_1", "upper_cabinet_run_2"})
    g = set_variant_pair(std::move(g), n, std::string(n) + "_open");
  return g;
}

void collect(const SceneNode& n, const std::string& parent, std::vector<std::string>& out) {
  std::string tags;
  for (const auto& t : n.tags) tags += t + ",";
  out.push_back(parent + "/" + n.name + "|" + tags + "|" + to_string(n.variant));
  for (const auto& c : n.children) collect(c, n.name, out);
}

std::set<std::string> names(const SceneGraph& g) {
  std::set<std::string> s;
  std::vector<const SceneNode*> stack{&g.root};
  while (!stack.empty()) {
    const SceneNode* n = stack.back();
    stack.pop_back();
    s.insert(n->name);
    for (const auto& c : n->children) stack.push_back(&c);
  }
  return s;
}

}  // namespace

// ---- assemble

TEST(Assemble, SingleMeshFlatSpec) {
  std::vector<LabeledMesh> meshes{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec spec;
  spec.entries.push_back({"box_node", "", "box", {"fixture"}, {}, false});
  const SceneGraph g = assemble(meshes, spec);
  EXPECT_EQ(g.node_count(), 2u);
  ASSERT_EQ(g.root.children.size(), 1u);
  EXPECT_EQ(g.root.children[0].name, "box_node");
  EXPECT_EQ(g.root.children[0].mesh->triangle_count(), 12u);
}

TEST(Assemble, KitchenNodeCountIsEntriesPlusRoot) {
  const auto f = kitchen_fixture();
  const SceneGraph g = assemble(f.meshes, f.spec);
  EXPECT_EQ(g.node_count(), f.spec.entries.size() + 1);
  EXPECT_TRUE(g.find("microwave")->collision.has_value());
  EXPECT_FALSE(g.find("cabinets")->mesh);
}

TEST(Assemble, MissingMeshThrows) {
  std::vector<LabeledMesh> meshes{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec spec;
  spec.entries.push_back({"a", "", "box", {}, {}, false});
  spec.entries.push_back({"b", "", "nope", {}, {}, false});
  EXPECT_THROW(assemble(meshes, spec), InvalidArgument);
}

TEST(Assemble, StructuralErrors) {
  std::vector<LabeledMesh> one{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec dup;
  dup.entries = {{"a", "", "box", {}, {}, false}, {"a", "", "", {}, {}, false}};
  EXPECT_THROW(assemble(one, dup), InvalidArgument);

  HierarchySpec orphan;
  orphan.entries = {{"a", "ghost", "box", {}, {}, false}};
  EXPECT_THROW(assemble(one, orphan), InvalidArgument);

  HierarchySpec cycle;
  cycle.entries = {{"a", "b", "box", {}, {}, false}, {"b", "a", "", {}, {}, false}};
  EXPECT_THROW(assemble(one, cycle), InvalidArgument);

  HierarchySpec twice;
  twice.entries = {{"a", "", "box", {}, {}, false}, {"b", "", "box", {}, {}, false}};
  EXPECT_THROW(assemble(one, twice), InvalidArgument);

  HierarchySpec unused;
  unused.entries = {{"a", "", "", {}, {}, false}};
  EXPECT_THROW(assemble(one, unused), InvalidArgument);

  HierarchySpec capsule_without_mesh;
  capsule_without_mesh.entries = {{"a", "", "box", {}, {}, false}, {"g", "", "", {}, {}, true}};
  EXPECT_THROW(assemble(one, capsule_without_mesh), InvalidArgument);
}

TEST(Assemble, ChildTransformsComposeIntoWorldBounds) {
  std::vector<LabeledMesh> meshes{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec spec;
  spec.entries = {{"group", "", "", {}, RigidTransform(Mat3::Identity(), Vec3(10, 0, 0)), false},
                  {"box", "group", "box", {}, RigidTransform(Mat3::Identity(), Vec3(0, 5, 0)), false}};
  const SceneGraph g = assemble(meshes, spec);
  const Bounds b = world_bounds(g, "group");
  EXPECT_NEAR(b.min.x(), 10, 1e-12);
  EXPECT_NEAR(b.min.y(), 5, 1e-12);
  EXPECT_NEAR(b.max.z(), 1, 1e-12);
}

// ---- variants

TEST(Variants, OpenShelfFillsTheClosedBoxBounds) {
  const Vec3 lo(0.2, 0.0, 1.5), hi(2.0, 0.35, 2.2);
  const TriangleMesh shelf = make_open_shelf(lo, hi, 1, +1, 2);
  const Bounds b = shelf.bounds();
  EXPECT_EQ(b.min, lo);
  EXPECT_EQ(b.max, hi);
  EXPECT_NO_THROW(shelf.validate());
}

TEST(Variants, EqualBoundsAccepted) {
  const SceneGraph g = kitchen_graph();
  EXPECT_EQ(g.find("upper_cabinet_run_1")->variant, Variant::A);
  EXPECT_EQ(g.find("upper_cabinet_run_1_open")->variant, Variant::B);
  EXPECT_EQ(g.find("counter_run_1")->variant, Variant::Both);
}

TEST(Variants, FiveMillimetreDeeperShelfRejected) {
  std::vector<LabeledMesh> meshes{{"closed", make_box_mesh({0, 0, 0}, {1.0, 0.6, 0.8})},
                                  {"open", make_open_shelf({0, 0, 0}, {1.0, 0.6, 0.805}, 1, +1, 2)}};
  HierarchySpec spec;
  spec.entries = {{"closed", "", "closed", {}, {}, false}, {"open", "", "open", {}, {}, false}};
  const SceneGraph g = assemble(meshes, spec);
  try {
    set_variant_pair(g, "closed", "open");
    FAIL() << "expected FootprintMismatch";
  } catch (const FootprintMismatch& e) {
    EXPECT_NEAR(e.delta_max.z(), 0.005, 1e-12);
    EXPECT_EQ(e.delta_max.x(), 0.0);
    EXPECT_EQ(e.delta_min.z(), 0.0);
    EXPECT_NE(std::string(e.what()).find("delta_z=0.005"), std::string::npos) << e.what();
  }
}

TEST(Variants, SelfPairAcceptedAndUnchanged) {
  std::vector<LabeledMesh> meshes{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec spec;
  spec.entries = {{"box", "", "box", {}, {}, false}};
  const SceneGraph g = set_variant_pair(assemble(meshes, spec), "box", "box");
  EXPECT_EQ(g.find("box")->variant, Variant::Both);
}

TEST(Variants, MissingNodeThrows) {
  const SceneGraph g = kitchen_graph();
  EXPECT_THROW(set_variant_pair(g, "counter_run_1", "nope"), InvalidArgument);
}

TEST(Variants, SelectSetAlgebra) {
  const SceneGraph g = kitchen_graph();
  const SceneGraph a = select_variant(g, Variant::A);
  const SceneGraph b = select_variant(g, Variant::B);
  EXPECT_EQ(a.resolved, Variant::A);
  EXPECT_EQ(b.resolved, Variant::B);
  EXPECT_TRUE(a.find("upper_cabinet_run_1"));
  EXPECT_FALSE(a.find("upper_cabinet_run_1_open"));
  EXPECT_FALSE(b.find("upper_cabinet_run_1"));
  EXPECT_TRUE(b.find("upper_cabinet_run_1_open"));

  const auto all = names(g), na = names(a), nb = names(b);
  std::set<std::string> shared, a_only, b_only;
  for (const auto& n : all) {
    const Variant v = g.find(n)->variant;
    (v == Variant::Both ? shared : v == Variant::A ? a_only : b_only).insert(n);
  }
  std::set<std::string> a_expect = shared, b_expect = shared;
  a_expect.insert(a_only.begin(), a_only.end());
  b_expect.insert(b_only.begin(), b_only.end());
  EXPECT_EQ(na, a_expect);
  EXPECT_EQ(nb, b_expect);
  for (const auto& n : na) {
    if (a.find(n)->variant != Variant::Both) {
      EXPECT_FALSE(nb.count(n)) << n;
    }
  }
  EXPECT_NO_THROW(a.validate());
  EXPECT_NO_THROW(b.validate());
}

TEST(Variants, SelectWithoutVariantsThrows) {
  const auto f = kitchen_fixture();
  const SceneGraph g = assemble(f.meshes, f.spec);
  EXPECT_THROW(select_variant(g, Variant::A), InvalidArgument);
}

// ---- capsule

TEST(Capsule, SphereDegeneratesToCentre) {
  const Vec3 c(1, -2, 0.5);
  const auto cap = fit_capsule(make_icosphere(3, 1.0, c));
  EXPECT_LT((cap.p0 - c).norm(), 0.01);
  EXPECT_LT((cap.p1 - c).norm(), 0.01);
  EXPECT_NEAR(cap.radius, 1.0, 0.01);
}

TEST(Capsule, CylinderAxisAndRadius) {
  const Vec3 axis = Vec3(0.3, -0.2, 1.0).normalized();
  const auto cap = fit_capsule(make_cylinder(0.3, 2.0, 64, 20, axis, Vec3(0.5, 0.5, 1)));
  const Vec3 got = (cap.p1 - cap.p0).normalized();
  const double angle = std::acos(std::min(1.0, std::abs(got.dot(axis)))) * 180 / std::numbers::pi;
  EXPECT_LT(angle, 1.0);
  EXPECT_NEAR(cap.radius, 0.3, 0.003);
}

TEST(Capsule, ContainsEveryVertex) {
  std::vector<TriangleMesh> meshes{make_box_mesh({0, 0, 0}, {2, 0.5, 0.3}), make_icosphere(2, 0.4),
                                   make_cylinder(0.1, 1.0, 12, 3, Vec3(1, 1, 0), Vec3::Zero()),
                                   make_open_shelf({0, 0, 0}, {1, 0.4, 0.8}, 1, +1, 3)};
  // A single vertex and a skewed point set.
  TriangleMesh one;
  one.vertices = {Vec3(3, 4, 5)};
  meshes.push_back(one);
  TriangleMesh skew;
  for (int i = 0; i < 200; ++i) skew.vertices.push_back(Vec3(std::sin(i * 1.7) * i * 0.01, std::cos(i * 0.3), i % 7));
  meshes.push_back(skew);
  for (const auto& m : meshes) {
    const auto cap = fit_capsule(m);
    EXPECT_GT(cap.radius, 0);
    for (const auto& v : m.vertices) EXPECT_TRUE(cap.contains(v)) << v.transpose();
  }
}

TEST(Capsule, EmptyMeshThrows) { EXPECT_THROW(fit_capsule(TriangleMesh{}), InvalidArgument); }

// ---- glTF

TEST(Gltf, KitchenRoundTripBothContainers) {
  const SceneGraph g = kitchen_graph();
  const fs::path dir = scratch_dir("roundtrip");
  for (const char* file : {"kitchen.glb", "kitchen.gltf"}) {
    export_scene(g, dir / file);
    const SceneGraph back = import_scene(dir / file);
    std::vector<std::string> want, got;
    collect(g.root, "", want);
    collect(back.root, "", got);
    EXPECT_EQ(want, got) << file;
    const auto* src = g.find("microwave");
    const auto* dst = back.find("microwave");
    ASSERT_TRUE(dst && dst->mesh && dst->collision);
    ASSERT_EQ(dst->mesh->vertices.size(), src->mesh->vertices.size());
    for (std::size_t i = 0; i < src->mesh->vertices.size(); ++i)
      for (int c = 0; c < 3; ++c)
        EXPECT_EQ(dst->mesh->vertices[i][c], static_cast<double>(static_cast<float>(src->mesh->vertices[i][c])));
    EXPECT_EQ(dst->mesh->triangles, src->mesh->triangles);
    EXPECT_EQ(dst->mesh->face_labels, src->mesh->face_labels);
    EXPECT_NEAR(dst->collision->radius, src->collision->radius, 1e-12);
  }
  EXPECT_TRUE(fs::exists(dir / "kitchen.bin"));
}

TEST(Gltf, ResolvedVariantAndTransformsSurvive) {
  std::vector<LabeledMesh> meshes{{"box", make_box_mesh({0, 0, 0}, {1, 1, 1})}};
  HierarchySpec spec;
  const Mat3 r = Eigen::AngleAxisd(0.7, Vec3(0, 0, 1)).toRotationMatrix();
  spec.entries = {{"box", "", "box", {"x"}, RigidTransform(r, Vec3(1, 2, 3)), false}};
  const SceneGraph g = assemble(meshes, spec);
  const fs::path p = scratch_dir("xform") / "s.glb";
  export_scene(g, p);
  const SceneGraph back = import_scene(p);
  const auto& t = back.find("box")->transform;
  EXPECT_LT((t.rotation() - r).norm(), 1e-12);
  EXPECT_LT((t.translation() - Vec3(1, 2, 3)).norm(), 1e-12);
  EXPECT_FALSE(back.resolved);

  const SceneGraph a = select_variant(kitchen_graph(), Variant::A);
  export_scene(a, p);
  EXPECT_EQ(import_scene(p).resolved, Variant::A);
}

TEST(Gltf, RootOnlyGraphWritesOneNode) {
  SceneGraph g;
  g.root.name = "scene";
  const fs::path p = scratch_dir("empty") / "empty.gltf";
  export_scene(g, p);
  const SceneGraph back = import_scene(p);
  EXPECT_EQ(back.node_count(), 1u);
  EXPECT_EQ(back.root.name, "scene");
  EXPECT_FALSE(fs::exists(p.parent_path() / "empty.bin"));
}

TEST(Gltf, Errors) {
  SceneGraph g;
  g.root.name = "scene";
  EXPECT_THROW(export_scene(g, "/nonexistent_dir_r2vr/x.glb"), IoError);
  SceneGraph bad;
  bad.root.name = "scene";
  bad.root.children.resize(2);
  bad.root.children[0].name = bad.root.children[1].name = "twin";
  EXPECT_THROW(export_scene(bad, scratch_dir("bad") / "x.glb"), InvalidArgument);

  const fs::path junk = scratch_dir("junk") / "junk.gltf";
  std::ofstream(junk) << "{ not json";
  EXPECT_THROW(import_scene(junk), FormatError);
  EXPECT_THROW(import_scene("/nonexistent_dir_r2vr/x.glb"), IoError);
}

// ---- budget

TEST(Budget, NinetyHertzIsElevenPointOneMs) {
  SceneGraph g;
  g.root.name = "scene";
  const auto r = budget_report(g);
  EXPECT_EQ(r.frame_budget_ms, 1000.0 / 90.0);
  EXPECT_EQ(r.frame_budget_ms_rounded(), 11.1);
  EXPECT_EQ(r.triangle_count, 0u);
  EXPECT_TRUE(r.pass);
}

TEST(Budget, InclusiveBoundary) {
  const auto graph_with = [](std::size_t tris) {
    auto m = std::make_shared<TriangleMesh>();
    m->vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m->triangles.assign(tris, Triangle{0, 1, 2});
    SceneGraph g;
    g.root.name = "scene";
    g.root.mesh = m;
    return g;
  };
  EXPECT_TRUE(budget_report(graph_with(450000)).pass);
  EXPECT_FALSE(budget_report(graph_with(450001)).pass);
  EXPECT_EQ(budget_report(graph_with(450001)).triangle_count, 450001u);
}

TEST(Budget, UnresolvedVariantsThrow) {
  const SceneGraph g = kitchen_graph();
  EXPECT_THROW(budget_report(g), InvalidArgument);
  const auto a = budget_report(select_variant(g, Variant::A));
  const auto b = budget_report(select_variant(g, Variant::B));
  EXPECT_TRUE(a.pass);
  EXPECT_TRUE(b.pass);
  EXPECT_LT(a.triangle_count, b.triangle_count);
  EXPECT_THROW(budget_report(select_variant(g, Variant::A), 0.0), InvalidArgument);
}
