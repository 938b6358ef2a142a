#include "r2vr/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "r2vr/geometry.hpp"

namespace r2vr {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    default: return "both";
  }
}

Variant variant_from_string(const std::string& s) {
  if (s == "A") return Variant::A;
  if (s == "B") return Variant::B;
  if (s == "both") return Variant::Both;
  throw InvalidArgument("unknown variant '" + s + "'");
}

bool CollisionCapsule::contains(const Vec3& p, double tol) const {
  return point_segment_distance(p, p0, p1) <= radius + tol;
}

// ---------------------------------------------------------------- graph

namespace {

template <class Node, class F>
void preorder(Node& n, F&& f) {
  f(n);
  for (auto& c : n.children) preorder(c, f);
}

template <class Node>
Node* find_in(Node& n, const std::string& name) {
  if (n.name == name) return &n;
  for (auto& c : n.children)
    if (auto* r = find_in(c, name)) return r;
  return nullptr;
}

// Node-to-world transform of the named node.
bool world_of(const SceneNode& n, const std::string& name, const RigidTransform& parent, RigidTransform& out,
              const SceneNode*& found) {
  const RigidTransform here = parent * n.transform;
  if (n.name == name) {
    out = here;
    found = &n;
    return true;
  }
  for (const auto& c : n.children)
    if (world_of(c, name, here, out, found)) return true;
  return false;
}

void subtree_bounds(const SceneNode& n, const RigidTransform& to_world, Bounds& b, bool& any) {
  if (n.mesh) {
    for (const auto& v : n.mesh->vertices) b.expand(to_world.apply(v));
    any = any || !n.mesh->vertices.empty();
  }
  for (const auto& c : n.children) subtree_bounds(c, to_world * c.transform, b, any);
}

SceneNode filter_variant(const SceneNode& n, Variant keep) {
  SceneNode out = n;
  out.children.clear();
  for (const auto& c : n.children)
    if (c.variant == Variant::Both || c.variant == keep) out.children.push_back(filter_variant(c, keep));
  return out;
}

}  // namespace

std::size_t SceneGraph::node_count() const {
  std::size_t n = 0;
  preorder(root, [&](const SceneNode&) { ++n; });
  return n;
}

const SceneNode* SceneGraph::find(const std::string& name) const { return find_in(root, name); }
SceneNode* SceneGraph::find(const std::string& name) { return find_in(root, name); }

bool SceneGraph::has_variants() const {
  bool any = false;
  preorder(root, [&](const SceneNode& n) { any = any || n.variant != Variant::Both; });
  return any;
}

void SceneGraph::validate() const {
  preorder(root, [](const SceneNode& n) {
    if (n.name.empty()) throw InvalidArgument("scene node with empty name");
    if (!n.transform.is_proper(1e-9)) throw InvalidArgument("scene node '" + n.name + "' has a non-rigid transform");
    std::set<std::string> seen;
    for (const auto& c : n.children)
      if (!seen.insert(c.name).second) {
        throw InvalidArgument("duplicate sibling name '" + c.name + "' under '" + n.name + "'");
      }
    if (n.mesh) n.mesh->validate();
    if (n.collision && !(n.collision->radius > 0)) {
      throw InvalidArgument("scene node '" + n.name + "' has a non-positive capsule radius");
    }
  });
}

SceneGraph assemble(std::span<const LabeledMesh> meshes, const HierarchySpec& spec) {
  std::map<std::string, std::size_t> mesh_of;
  for (std::size_t i = 0; i < meshes.size(); ++i)
    if (!mesh_of.emplace(meshes[i].id, i).second) throw InvalidArgument("duplicate mesh id '" + meshes[i].id + "'");

  std::map<std::string, std::size_t> entry_of;
  for (std::size_t i = 0; i < spec.entries.size(); ++i) {
    const auto& e = spec.entries[i];
    if (e.name.empty()) throw InvalidArgument("hierarchy entry with empty name");
    if (e.name == spec.root_name || !entry_of.emplace(e.name, i).second) {
      throw InvalidArgument("duplicate node name '" + e.name + "'");
    }
  }
  const auto parent_of = [&](const HierarchyEntry& e) -> std::optional<std::size_t> {
    if (e.parent.empty() || e.parent == spec.root_name) return std::nullopt;
    auto it = entry_of.find(e.parent);
    if (it == entry_of.end()) throw InvalidArgument("node '" + e.name + "' has unknown parent '" + e.parent + "'");
    return it->second;
  };
  for (const auto& e : spec.entries) {
    std::size_t steps = 0;
    for (auto p = parent_of(e); p; p = parent_of(spec.entries[*p]))
      if (++steps > spec.entries.size()) throw InvalidArgument("parent cycle through node '" + e.name + "'");
  }

  std::vector<int> uses(meshes.size(), 0);
  std::vector<std::shared_ptr<const TriangleMesh>> shared(meshes.size());
  std::function<SceneNode(const HierarchyEntry*)> build = [&](const HierarchyEntry* self) {
    SceneNode n;
    if (self) {
      n.name = self->name;
      n.transform = self->transform;
      n.tags.insert(self->tags.begin(), self->tags.end());
      if (!self->mesh_id.empty()) {
        auto it = mesh_of.find(self->mesh_id);
        if (it == mesh_of.end()) {
          throw InvalidArgument("node '" + self->name + "' references missing mesh '" + self->mesh_id + "'");
        }
        if (++uses[it->second] > 1) throw InvalidArgument("mesh '" + self->mesh_id + "' referenced twice");
        if (!shared[it->second]) shared[it->second] = std::make_shared<const TriangleMesh>(meshes[it->second].mesh);
        n.mesh = shared[it->second];
      }
      if (self->collision) {
        if (!n.mesh) throw InvalidArgument("collision requested on node '" + self->name + "' without a mesh");
        n.collision = fit_capsule(*n.mesh);
      }
    } else {
      n.name = spec.root_name;
    }
    for (const auto& e : spec.entries) {
      const auto p = parent_of(e);
      const bool mine = self ? (p && &spec.entries[*p] == self) : !p;
      if (mine) n.children.push_back(build(&e));
    }
    return n;
  };
  SceneGraph g;
  g.root = build(nullptr);
  for (std::size_t i = 0; i < meshes.size(); ++i)
    if (uses[i] == 0) throw InvalidArgument("mesh '" + meshes[i].id + "' is not referenced by the hierarchy");
  g.validate();
  return g;
}

Bounds world_bounds(const SceneGraph& graph, const std::string& name) {
  RigidTransform w;
  const SceneNode* node = nullptr;
  if (!world_of(graph.root, name, RigidTransform::identity(), w, node)) {
    throw InvalidArgument("no scene node named '" + name + "'");
  }
  Bounds b;
  bool any = false;
  subtree_bounds(*node, w, b, any);
  if (!any) throw InvalidArgument("scene node '" + name + "' has no mesh");
  return b;
}

SceneGraph set_variant_pair(SceneGraph graph, const std::string& a, const std::string& b, double tol) {
  const Bounds ba = world_bounds(graph, a);
  const Bounds bb = world_bounds(graph, b);
  if (a == b) return graph;
  const Vec3 dmin = bb.min - ba.min, dmax = bb.max - ba.max;
  if ((dmin.cwiseAbs().array() > tol).any() || (dmax.cwiseAbs().array() > tol).any()) {
    std::ostringstream os;
    os << "footprint mismatch between '" << a << "' and '" << b << "':";
    const char* axis = "xyz";
    for (int i = 0; i < 3; ++i) {
      const double d = std::abs(dmin[i]) >= std::abs(dmax[i]) ? dmin[i] : dmax[i];
      os << " delta_" << axis[i] << "=" << d;
    }
    throw FootprintMismatch(os.str(), dmin, dmax);
  }
  graph.find(a)->variant = Variant::A;
  graph.find(b)->variant = Variant::B;
  return graph;
}

SceneGraph select_variant(const SceneGraph& graph, Variant which) {
  if (which == Variant::Both) throw InvalidArgument("select_variant needs A or B");
  if (!graph.has_variants()) throw InvalidArgument("scene has no variant nodes to resolve");
  SceneGraph out;
  out.root = filter_variant(graph.root, which);
  out.resolved = which;
  return out;
}

// ---------------------------------------------------------------- capsule

CollisionCapsule fit_capsule(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw InvalidArgument("fit_capsule needs at least one vertex");
  const PlaneFit pca = fit_plane_pca(mesh.vertices);
  const Vec3 c = pca.centroid;
  const Vec3 axis = pca.eigenvectors.col(2).normalized();
  std::vector<double> t(mesh.vertices.size()), r(mesh.vertices.size());
  double radius = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Vec3 d = mesh.vertices[i] - c;
    t[i] = d.dot(axis);
    r[i] = (d - t[i] * axis).norm();
    radius = std::max(radius, r[i]);
  }
  radius = std::max(radius, 1e-9);
  // Vertex i is inside when the nearer endpoint is within sqrt(R^2 - r_i^2)
  // of it axially; take the innermost endpoints satisfying every vertex.
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = std::sqrt(std::max(0.0, radius * radius - r[i] * r[i]));
    lo = std::min(lo, t[i] + s);
    hi = std::max(hi, t[i] - s);
  }
  if (lo > hi) lo = hi = 0.5 * (lo + hi);
  return {c + lo * axis, c + hi * axis, radius};
}

// ---------------------------------------------------------------- budget

double BudgetReport::frame_budget_ms_rounded() const { return std::round(frame_budget_ms * 10.0) / 10.0; }

BudgetReport budget_report(const SceneGraph& graph, double refresh_hz, std::size_t polygon_budget) {
  if (!(refresh_hz > 0) || !std::isfinite(refresh_hz)) throw InvalidArgument("refresh_hz must be positive");
  if (graph.has_variants() && !graph.resolved) {
    throw InvalidArgument("budget needs a resolved scene; select a variant first");
  }
  BudgetReport r;
  r.refresh_hz = refresh_hz;
  r.polygon_budget = polygon_budget;
  r.frame_budget_ms = 1000.0 / refresh_hz;
  preorder(graph.root, [&](const SceneNode& n) {
    if (n.mesh) r.triangle_count += n.mesh->triangle_count();
  });
  r.pass = r.triangle_count <= r.polygon_budget;
  return r;
}

// ---------------------------------------------------------------- glTF

namespace {

constexpr std::uint32_t kGlbMagic = 0x46546C67;  // "glTF"
constexpr std::uint32_t kChunkJson = 0x4E4F534A;
constexpr std::uint32_t kChunkBin = 0x004E4942;

void put_bytes(std::vector<std::uint8_t>& buf, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json face_label_runs(const TriangleMesh& m) {
  json runs = json::array();
  for (std::size_t i = 0; i < m.face_labels.size();) {
    std::size_t j = i;
    while (j < m.face_labels.size() && m.face_labels[j] == m.face_labels[i]) ++j;
    runs.push_back(json::array({m.face_labels[i], j - i}));
    i = j;
  }
  return runs;
}

struct GltfBuild {
  json doc;
  std::vector<std::uint8_t> bin;
  std::map<const TriangleMesh*, int> mesh_index;

  int add_mesh(const TriangleMesh& m) {
    if (auto it = mesh_index.find(&m); it != mesh_index.end()) return it->second;
    const std::size_t pos_off = bin.size();
    Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity()), hi = -lo;
    for (const auto& v : m.vertices) {
      const Eigen::Vector3f f = v.cast<float>();
      lo = lo.cwiseMin(f);
      hi = hi.cwiseMax(f);
      put_bytes(bin, f.data(), sizeof(float) * 3);
    }
    const std::size_t idx_off = bin.size();
    for (const auto& t : m.triangles) put_bytes(bin, t.data(), sizeof(std::uint32_t) * 3);
    const std::size_t end = bin.size();

    auto& views = doc["bufferViews"];
    auto& acc = doc["accessors"];
    const int pos_view = static_cast<int>(views.size());
    views.push_back({{"buffer", 0}, {"byteOffset", pos_off}, {"byteLength", idx_off - pos_off}, {"target", 34962}});
    views.push_back({{"buffer", 0}, {"byteOffset", idx_off}, {"byteLength", end - idx_off}, {"target", 34963}});
    const int pos_acc = static_cast<int>(acc.size());
    acc.push_back({{"bufferView", pos_view},
                   {"componentType", 5126},
                   {"count", m.vertices.size()},
                   {"type", "VEC3"},
                   {"min", {lo.x(), lo.y(), lo.z()}},
                   {"max", {hi.x(), hi.y(), hi.z()}}});
    acc.push_back(
        {{"bufferView", pos_view + 1}, {"componentType", 5125}, {"count", m.triangles.size() * 3}, {"type", "SCALAR"}});
    json mesh = {{"primitives", json::array({{{"attributes", {{"POSITION", pos_acc}}}, {"indices", pos_acc + 1},
                                              {"mode", 4}}})}};
    if (!m.face_labels.empty()) mesh["extras"] = {{"face_labels", face_label_runs(m)}};
    const int id = static_cast<int>(doc["meshes"].size());
    doc["meshes"].push_back(mesh);
    mesh_index.emplace(&m, id);
    return id;
  }

  int add_node(const SceneNode& n) {
    const int id = static_cast<int>(doc["nodes"].size());
    doc["nodes"].push_back(json::object());
    json node = {{"name", n.name}};
    const Vec3& t = n.transform.translation();
    if (!t.isZero(0)) node["translation"] = vec_json(t);
    const Eigen::Quaterniond q = n.transform.quaternion();
    if (!n.transform.rotation().isIdentity(0)) node["rotation"] = {q.x(), q.y(), q.z(), q.w()};
    if (n.mesh && !n.mesh->empty()) node["mesh"] = add_mesh(*n.mesh);
    json extras = {{"semantic", json(std::vector<std::string>(n.tags.begin(), n.tags.end()))},
                   {"variant", to_string(n.variant)}};
    if (n.collision) {
      extras["collision"] = {
          {"p0", vec_json(n.collision->p0)}, {"p1", vec_json(n.collision->p1)}, {"radius", n.collision->radius}};
    }
    node["extras"] = extras;
    if (!n.children.empty()) {
      json kids = json::array();
      for (const auto& c : n.children) kids.push_back(add_node(c));
      node["children"] = kids;
    }
    doc["nodes"][id] = node;
    return id;
  }
};

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw FormatError("glb truncated");
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

TriangleMesh read_mesh(const json& doc, int mesh_id, const std::vector<std::uint8_t>& bin) {
  const json& prim = doc.at("meshes").at(mesh_id).at("primitives").at(0);
  const auto view_bytes = [&](int acc_id, int comp, std::size_t width) {
    const json& acc = doc.at("accessors").at(acc_id);
    if (acc.at("componentType").get<int>() != comp) throw FormatError("unsupported accessor component type");
    const json& view = doc.at("bufferViews").at(acc.at("bufferView").get<int>());
    const std::size_t off = view.value("byteOffset", std::size_t{0}) + acc.value("byteOffset", std::size_t{0});
    const std::size_t len = acc.at("count").get<std::size_t>() * width;
    if (off + len > bin.size()) throw FormatError("accessor runs past the buffer");
    return std::make_pair(bin.data() + off, acc.at("count").get<std::size_t>());
  };
  TriangleMesh m;
  const auto [pp, pc] = view_bytes(prim.at("attributes").at("POSITION").get<int>(), 5126, 12);
  m.vertices.resize(pc);
  for (std::size_t i = 0; i < pc; ++i) {
    float f[3];
    std::memcpy(f, pp + 12 * i, 12);
    m.vertices[i] = Vec3(f[0], f[1], f[2]);
  }
  const auto [ip, ic] = view_bytes(prim.at("indices").get<int>(), 5125, 4);
  if (ic % 3) throw FormatError("index count not a multiple of 3");
  m.triangles.resize(ic / 3);
  std::memcpy(m.triangles.data(), ip, ic * 4);
  const json& mesh = doc.at("meshes").at(mesh_id);
  if (mesh.contains("extras") && mesh["extras"].contains("face_labels")) {
    for (const auto& run : mesh["extras"]["face_labels"])
      m.face_labels.insert(m.face_labels.end(), run.at(1).get<std::size_t>(), run.at(0).get<std::string>());
  }
  m.validate(0.0);
  return m;
}

SceneNode read_node(const json& doc, int id, const std::vector<std::uint8_t>& bin,
                    std::map<int, std::shared_ptr<const TriangleMesh>>& meshes, int depth) {
  if (depth > 10000) throw FormatError("node hierarchy too deep or cyclic");
  const json& j = doc.at("nodes").at(id);
  SceneNode n;
  n.name = j.value("name", std::string{});
  Vec3 t = Vec3::Zero();
  if (j.contains("translation")) t = vec_from(j["translation"]);
  Mat3 r = Mat3::Identity();
  if (j.contains("rotation")) {
    const auto& q = j["rotation"];
    r = Eigen::Quaterniond(q[3].get<double>(), q[0].get<double>(), q[1].get<double>(), q[2].get<double>())
            .normalized()
            .toRotationMatrix();
  }
  n.transform = RigidTransform(r, t);
  if (j.contains("mesh")) {
    const int m = j["mesh"].get<int>();
    auto& slot = meshes[m];
    if (!slot) slot = std::make_shared<const TriangleMesh>(read_mesh(doc, m, bin));
    n.mesh = slot;
  }
  if (j.contains("extras")) {
    const json& e = j["extras"];
    for (const auto& tag : e.value("semantic", json::array())) n.tags.insert(tag.get<std::string>());
    n.variant = variant_from_string(e.value("variant", std::string("both")));
    if (e.contains("collision")) {
      const auto& c = e["collision"];
      n.collision = CollisionCapsule{vec_from(c.at("p0")), vec_from(c.at("p1")), c.at("radius").get<double>()};
    }
  }
  for (const auto& c : j.value("children", json::array())) n.children.push_back(read_node(doc, c.get<int>(), bin, meshes, depth + 1));
  return n;
}

}  // namespace

void export_scene(const SceneGraph& graph, const std::filesystem::path& path) {
  graph.validate();
  GltfBuild b;
  b.doc["asset"] = {{"version", "2.0"}, {"generator", std::string("r2vr ") + kToolVersion}};
  b.doc["nodes"] = json::array();
  b.doc["meshes"] = json::array();
  b.doc["accessors"] = json::array();
  b.doc["bufferViews"] = json::array();
  const int root = b.add_node(graph.root);
  b.doc["scene"] = 0;
  json scene = {{"nodes", {root}}};
  if (graph.resolved) scene["extras"] = {{"resolved_variant", to_string(*graph.resolved)}};
  b.doc["scenes"] = json::array({scene});
  for (const char* k : {"meshes", "accessors", "bufferViews"})
    if (b.doc[k].empty()) b.doc.erase(k);

  const bool glb = path.extension() == ".glb";
  std::filesystem::path bin_path = path;
  bin_path.replace_extension(".bin");
  if (!b.bin.empty()) {
    json buffer = {{"byteLength", b.bin.size()}};
    if (!glb) buffer["uri"] = bin_path.filename().string();
    b.doc["buffers"] = json::array({buffer});
  }
  const std::string text = b.doc.dump(1);
  if (!glb) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
    if (!b.bin.empty()) write_file(bin_path, b.bin);
    return;
  }
  std::vector<std::uint8_t> js(text.begin(), text.end());
  while (js.size() % 4) js.push_back(' ');
  std::vector<std::uint8_t> bin = b.bin;
  while (bin.size() % 4) bin.push_back(0);
  std::vector<std::uint8_t> out;
  const auto u32 = [&](std::uint32_t v) { put_bytes(out, &v, 4); };
  const std::size_t total = 12 + 8 + js.size() + (bin.empty() ? 0 : 8 + bin.size());
  u32(kGlbMagic);
  u32(2);
  u32(static_cast<std::uint32_t>(total));
  u32(static_cast<std::uint32_t>(js.size()));
  u32(kChunkJson);
  put_bytes(out, js.data(), js.size());
  if (!bin.empty()) {
    u32(static_cast<std::uint32_t>(bin.size()));
    u32(kChunkBin);
    put_bytes(out, bin.data(), bin.size());
  }
  write_file(path, out);
}

SceneGraph import_scene(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  json doc;
  std::vector<std::uint8_t> bin;
  try {
    if (bytes.size() >= 4 && u32_at(bytes, 0) == kGlbMagic) {
      const std::uint32_t jlen = u32_at(bytes, 12);
      if (u32_at(bytes, 16) != kChunkJson || 20 + std::size_t(jlen) > bytes.size()) throw FormatError("bad glb json chunk");
      doc = json::parse(bytes.begin() + 20, bytes.begin() + 20 + jlen);
      const std::size_t boff = 20 + jlen;
      if (boff + 8 <= bytes.size()) {
        const std::uint32_t blen = u32_at(bytes, boff);
        if (u32_at(bytes, boff + 4) != kChunkBin || boff + 8 + blen > bytes.size()) throw FormatError("bad glb bin chunk");
        bin.assign(bytes.begin() + boff + 8, bytes.begin() + boff + 8 + blen);
      }
    } else {
      doc = json::parse(bytes.begin(), bytes.end());
      if (doc.contains("buffers") && !doc["buffers"].empty()) {
        const auto& uri = doc["buffers"][0].at("uri").get_ref<const std::string&>();
        bin = read_file(path.parent_path() / uri);
      }
    }
    if (doc.at("asset").at("version").get<std::string>() != "2.0") throw FormatError("not a glTF 2.0 asset");
    const json& scene = doc.at("scenes").at(doc.value("scene", 0));
    if (scene.at("nodes").size() != 1) throw FormatError("expected a single root node");
    SceneGraph g;
    std::map<int, std::shared_ptr<const TriangleMesh>> meshes;
    g.root = read_node(doc, scene["nodes"][0].get<int>(), bin, meshes, 0);
    if (scene.contains("extras") && scene["extras"].contains("resolved_variant")) {
      g.resolved = variant_from_string(scene["extras"]["resolved_variant"].get<std::string>());
    }
    return g;
  } catch (const json::exception& e) {
    throw FormatError("malformed glTF '" + path.string() + "': " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("malformed glTF '" + path.string() + "': " + e.what());
  }
}

TriangleMesh make_open_shelf(const Vec3& min, const Vec3& max, int open_axis, int open_sign, int shelves,
                             double board) {
  if (open_axis < 0 || open_axis > 2 || shelves < 0 || !(board > 0)) throw InvalidArgument("bad shelf parameters");
  const int up = open_axis == 2 ? 0 : 2;
  const int side = 3 - open_axis - up;
  if ((max - min).minCoeff() <= 2 * board) throw InvalidArgument("shelf unit too small for its boards");
  TriangleMesh m;
  const auto slab = [&](int axis, double a, double b) {
    Vec3 lo = min, hi = max;
    lo[axis] = a;
    hi[axis] = b;
    m.append(make_box_mesh(lo, hi));
  };
  // Back board opposite the open face, two sides, top and bottom.
  if (open_sign > 0) slab(open_axis, min[open_axis], min[open_axis] + board);
  else slab(open_axis, max[open_axis] - board, max[open_axis]);
  slab(side, min[side], min[side] + board);
  slab(side, max[side] - board, max[side]);
  slab(up, min[up], min[up] + board);
  slab(up, max[up] - board, max[up]);
  const double span = max[up] - min[up];
  for (int s = 1; s <= shelves; ++s) {
    const double c = min[up] + span * s / (shelves + 1);
    slab(up, c - board / 2, c + board / 2);
  }
  return m;
}

}  // namespace r2vr
