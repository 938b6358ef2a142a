#include <sstream>

#include "r2vr/simscan.hpp"

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace r2vr {

namespace {

toml::array vec_array(const Vec3& v) { return toml::array{v.x(), v.y(), v.z()}; }
toml::array rgb_array(const Rgb& c) { return toml::array{int64_t{c[0]}, int64_t{c[1]}, int64_t{c[2]}}; }

Vec3 read_vec(const toml::node* n, const std::string& what) {
  const auto* a = n ? n->as_array() : nullptr;
  if (!a || a->size() != 3) throw InvalidArgument("scene: '" + what + "' must be a 3-element array");
  Vec3 v;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto d = (*a)[i].value<double>();
    if (!d) throw InvalidArgument("scene: '" + what + "' must hold numbers");
    v[static_cast<Eigen::Index>(i)] = *d;
  }
  return v;
}

Rgb read_rgb(const toml::node* n, const std::string& what) {
  const auto* a = n ? n->as_array() : nullptr;
  if (!a || a->size() != 3) throw InvalidArgument("scene: '" + what + "' must be a 3-element array");
  Rgb c;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto x = (*a)[i].value<int64_t>();
    if (!x || *x < 0 || *x > 255) throw InvalidArgument("scene: '" + what + "' channels must be integers in [0,255]");
    c[i] = static_cast<std::uint8_t>(*x);
  }
  return c;
}

double read_double(const toml::table& t, const char* key, double fallback) {
  const auto* n = t.get(key);
  if (!n) return fallback;
  const auto d = n->value<double>();
  if (!d) throw InvalidArgument(std::string("scene: '") + key + "' must be a number");
  return *d;
}

}  // namespace

std::string scene_to_toml(const SceneDescription& scene) {
  toml::table root;
  root.insert("name", scene.name);
  toml::array tris;
  for (const auto& t : scene.triangles) {
    toml::table e;
    e.insert("v", toml::array{vec_array(t.v[0]), vec_array(t.v[1]), vec_array(t.v[2])});
    e.insert("material", t.material == Material::Specular ? "specular" : "diffuse");
    e.insert("albedo", rgb_array(t.albedo));
    if (t.target >= 0) e.insert("target", int64_t{t.target});
    tris.push_back(std::move(e));
  }
  root.insert("triangle", std::move(tris));
  toml::array placements;
  for (const auto& p : scene.target_placements) {
    toml::table e;
    e.insert("center", vec_array(p.center));
    e.insert("normal", vec_array(p.normal));
    e.insert("edge", p.edge);
    e.insert("rotation_deg", p.rotation_deg);
    e.insert("background", rgb_array(p.background));
    e.insert("label", p.label);
    placements.push_back(std::move(e));
  }
  root.insert("placement", std::move(placements));
  toml::array targets;
  for (const auto& f : scene.targets) {
    toml::table e;
    e.insert("centroid", vec_array(f.centroid));
    e.insert("normal", vec_array(f.normal));
    e.insert("u", vec_array(f.u));
    e.insert("v", vec_array(f.v));
    e.insert("edge", f.edge);
    e.insert("background", rgb_array(f.background));
    e.insert("label", f.label);
    targets.push_back(std::move(e));
  }
  root.insert("target", std::move(targets));
  std::ostringstream os;
  os << root;
  return os.str();
}

SceneDescription scene_from_toml(const std::string& text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw InvalidArgument(std::string("scene: ") + std::string(e.description()));
  }
  SceneDescription s;
  s.name = root["name"].value_or(std::string{});
  if (const auto* arr = root["triangle"].as_array()) {
    for (const auto& n : *arr) {
      const auto* t = n.as_table();
      if (!t) throw InvalidArgument("scene: triangle entries must be tables");
      const auto* v = t->get_as<toml::array>("v");
      if (!v || v->size() != 3) throw InvalidArgument("scene: triangle 'v' must list 3 vertices");
      SceneTriangle tri;
      for (std::size_t i = 0; i < 3; ++i) tri.v[i] = read_vec(v->get(i), "v");
      const std::string mat = (*t)["material"].value_or(std::string("diffuse"));
      if (mat == "specular") {
        tri.material = Material::Specular;
      } else if (mat != "diffuse") {
        throw InvalidArgument("scene: unknown material '" + mat + "'");
      }
      if (t->contains("albedo")) tri.albedo = read_rgb(t->get("albedo"), "albedo");
      tri.target = static_cast<std::int32_t>((*t)["target"].value_or(int64_t{-1}));
      s.triangles.push_back(tri);
    }
  }
  if (const auto* arr = root["placement"].as_array()) {
    for (const auto& n : *arr) {
      const auto* t = n.as_table();
      if (!t) throw InvalidArgument("scene: placement entries must be tables");
      TargetPlacement p;
      p.center = read_vec(t->get("center"), "center");
      p.normal = read_vec(t->get("normal"), "normal");
      p.edge = read_double(*t, "edge", p.edge);
      p.rotation_deg = read_double(*t, "rotation_deg", 0.0);
      if (t->contains("background")) p.background = read_rgb(t->get("background"), "background");
      p.label = (*t)["label"].value_or(std::string{});
      s.target_placements.push_back(p);
    }
  }
  if (const auto* arr = root["target"].as_array()) {
    for (const auto& n : *arr) {
      const auto* t = n.as_table();
      if (!t) throw InvalidArgument("scene: target entries must be tables");
      TargetFrame f;
      f.centroid = read_vec(t->get("centroid"), "centroid");
      f.normal = read_vec(t->get("normal"), "normal");
      f.u = read_vec(t->get("u"), "u");
      f.v = read_vec(t->get("v"), "v");
      f.edge = read_double(*t, "edge", f.edge);
      if (t->contains("background")) f.background = read_rgb(t->get("background"), "background");
      f.label = (*t)["label"].value_or(std::string{});
      s.targets.push_back(f);
    }
  }
  s.validate();
  return s;
}

}  // namespace r2vr
