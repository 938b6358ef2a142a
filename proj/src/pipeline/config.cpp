#include "r2vr/pipeline/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include "toml.hpp"

namespace r2vr {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += "\n  " + x;
  return s;
}

struct Range {
  double lo, hi;
  bool lo_open = false, hi_open = false;

  bool contains(double v) const {
    return std::isfinite(v) && (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
  std::string str() const {
    std::ostringstream os;
    os << (lo_open ? '(' : '[') << lo << ", " << hi << (hi_open ? ')' : ']');
    return os.str();
  }
};

// Reads keys of one table, remembering which were consumed so the rest can
// be reported as unknown.
class Reader {
 public:
  Reader(const toml::table* t, std::string prefix, std::vector<std::string>& errors)
      : t_(t), prefix_(std::move(prefix)), errors_(errors) {}

  bool present() const { return t_ != nullptr; }

  const toml::node* node(const std::string& key) {
    seen_.insert(key);
    return t_ ? t_->get(key) : nullptr;
  }

  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void error(const std::string& msg) { errors_.push_back(msg); }

  void number(const std::string& key, double& out, Range r) {
    const auto* n = node(key);
    if (!n) return;
    const auto v = n->value<double>();
    if (!v || !(n->is_floating_point() || n->is_integer())) return error(name(key) + " must be a number");
    if (!r.contains(*v)) {
      std::ostringstream os;
      os << name(key) << " = " << *v << " is out of range " << r.str();
      return error(os.str());
    }
    out = *v;
  }

  template <class Int>
  void integer(const std::string& key, Int& out, std::int64_t lo, std::int64_t hi) {
    const auto* n = node(key);
    if (!n) return;
    const auto v = n->value_exact<std::int64_t>();
    if (!v) return error(name(key) + " must be an integer");
    if (*v < lo || *v > hi) {
      return error(name(key) + " = " + std::to_string(*v) + " is out of range [" + std::to_string(lo) + ", " +
                   std::to_string(hi) + "]");
    }
    out = static_cast<Int>(*v);
  }

  void boolean(const std::string& key, bool& out) {
    const auto* n = node(key);
    if (!n) return;
    if (!n->is_boolean()) return error(name(key) + " must be true or false");
    out = *n->value<bool>();
  }

  void string(const std::string& key, std::string& out, const std::vector<std::string>& allowed = {}) {
    const auto* n = node(key);
    if (!n) return;
    if (!n->is_string()) return error(name(key) + " must be a string");
    const std::string v = *n->value<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      return error(name(key) + " = \"" + v + "\" is not one of: " + opts);
    }
    out = v;
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    const auto* a = n->as_array();
    std::vector<std::string> out;
    if (a) {
      for (const auto& e : *a) {
        if (!e.is_string()) break;
        out.push_back(*e.value<std::string>());
      }
    }
    if (!a || out.size() != a->size()) {
      error(name(key) + " must be an array of strings");
      return std::nullopt;
    }
    return out;
  }

  static std::optional<Vec3> as_vec3(const toml::node* n) {
    const auto* a = n ? n->as_array() : nullptr;
    if (!a || a->size() != 3) return std::nullopt;
    Vec3 v;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto d = (*a)[i].value<double>();
      if (!d || !std::isfinite(*d)) return std::nullopt;
      v[static_cast<Eigen::Index>(i)] = *d;
    }
    return v;
  }

  std::optional<Vec3> vec3(const std::string& key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    auto v = as_vec3(n);
    if (!v) error(name(key) + " must be an array of three numbers");
    return v;
  }

  Reader table(const std::string& key) {
    const auto* n = node(key);
    if (n && !n->is_table()) {
      error(name(key) + " must be a table");
      return Reader(nullptr, name(key), errors_);
    }
    return Reader(n ? n->as_table() : nullptr, name(key), errors_);
  }

  // Array of tables; nullopt when absent or malformed.
  std::optional<std::vector<Reader>> tables(const std::string& key) {
    const auto* n = node(key);
    if (!n) return std::nullopt;
    const auto* a = n->as_array();
    if (!a || (!a->empty() && !a->is_array_of_tables())) {
      error(name(key) + " must be an array of tables");
      return std::nullopt;
    }
    std::vector<Reader> out;
    for (std::size_t i = 0; i < a->size(); ++i)
      out.emplace_back((*a)[i].as_table(), name(key) + "[" + std::to_string(i) + "]", errors_);
    return out;
  }

  // Reports keys nobody asked for; call after every lookup.
  void finish() {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      const std::string key(k.str());
      if (!seen_.count(key)) error("unknown key '" + name(key) + "'");
    }
  }

 private:
  const toml::table* t_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

nlohmann::ordered_json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error("invalid config:" + join(violations)), violations_(std::move(violations)) {}

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError({os.str()});
  }

  PipelineConfig cfg;
  std::vector<std::string> errors;
  Reader top(&root, "", errors);
  top.integer("seed", cfg.seed, 0, std::numeric_limits<std::int64_t>::max());
  std::string out_dir;
  top.string("output_dir", out_dir);
  if (!out_dir.empty()) cfg.output_dir = resolve(base_dir, out_dir);

  {
    Reader in = top.table("input");
    std::string source = "synth_kitchen";
    in.string("source", source, {"synth_kitchen", "scans"});
    cfg.input.source = source == "scans" ? InputSource::Scans : InputSource::SynthKitchen;
    if (auto scans = in.strings("scans")) {
      for (const auto& s : *scans) {
        const auto p = resolve(base_dir, s);
        const auto ext = p.extension().string();
        if (ext != ".e57" && ext != ".ply") errors.push_back("input.scans: '" + s + "' is neither .e57 nor .ply");
        cfg.input.scans.push_back(p);
      }
    }
    in.integer("anchor", cfg.input.anchor, 0, 1 << 16);
    in.number("stray_fraction", cfg.input.stray_fraction, {0, 0.1});
    in.number("stray_clearance", cfg.input.stray_clearance, {0, 2, true});

    Reader k = in.table("kitchen");
    auto& kp = cfg.input.kitchen;
    k.number("length", kp.length, {2.6, 20});
    k.number("width", kp.width, {2.2, 20});
    k.number("height", kp.height, {2.4, 6});
    k.number("station_b_yaw_deg", kp.station_b_yaw_deg, {-180, 180});
    k.boolean("specular_surfaces", kp.specular_surfaces);
    k.integer("target_count", kp.target_count, 3, 8);
    k.finish();

    Reader s = in.table("scanner");
    auto& sc = cfg.input.scanner;
    s.number("systematic_bias", sc.systematic_bias, {-0.01, 0.01});
    s.number("range_noise_at_10m", sc.range_noise_at_10m, {0, 0.01});
    s.number("angular_step", sc.angular_step, {0.0005, 0.05});
    s.number("vertical_fov_deg", sc.vertical_fov_deg, {0, 360, true});
    s.number("horizontal_fov_deg", sc.horizontal_fov_deg, {0, 360, true});
    s.finish();
    in.finish();

    if (cfg.input.source == InputSource::Scans) {
      if (cfg.input.scans.empty()) errors.push_back("input.scans needs at least one file when source = \"scans\"");
    } else if (!cfg.input.scans.empty()) {
      errors.push_back("input.scans is only used with source = \"scans\"");
    }
  }

  {
    Reader r = top.table("registration");
    auto& d = cfg.registration.detection;
    auto& m = cfg.registration.matching;
    r.number("patch_radius", d.patch_radius, {0, 1, true});
    r.number("planarity_max", d.planarity_max, {0, 1, true});
    r.number("contrast_min", d.contrast_min, {0, 1, true});
    r.integer("min_points", d.min_points, 3, 1000000);
    r.number("link_radius", d.link_radius, {0, 0.5, true});
    r.number("target_edge", d.target_edge, {0, 1, true});
    r.number("match_tolerance", m.tolerance, {0, 0.1, true});
    r.integer("max_triples", m.max_triples, 1, 10000000);
    r.finish();
  }

  {
    Reader c = top.table("cleanup");
    c.integer("k", cfg.cleanup.stray.k, 1, 64);
    c.number("alpha", cfg.cleanup.stray.alpha, {0, 10, true});
    c.number("ghost_epsilon", cfg.cleanup.ghost_epsilon, {0, 1, true});
    const auto lo = c.vec3("crop_min"), hi = c.vec3("crop_max");
    if (lo.has_value() != hi.has_value()) {
      if (!c.node("crop_min") || !c.node("crop_max")) errors.push_back("cleanup.crop_min and cleanup.crop_max must be given together");
    } else if (lo) {
      CropBox box{*lo, *hi};
      if (!box.valid()) errors.push_back("cleanup.crop_min must not exceed cleanup.crop_max on any axis");
      cfg.cleanup.crop = box;
    }
    if (auto regions = c.tables("specular_regions")) {
      std::vector<SpecularRegionConfig> out;
      for (auto& r : *regions) {
        SpecularRegionConfig sr;
        r.string("label", sr.label);
        const auto* corners = r.node("corners");
        const auto* arr = corners ? corners->as_array() : nullptr;
        bool ok = arr && arr->size() == 4;
        for (std::size_t i = 0; ok && i < 4; ++i) {
          const auto v = Reader::as_vec3(arr->get(i));
          ok = v.has_value();
          if (ok) sr.corners[i] = *v;
        }
        if (!ok) {
          r.error(r.name("corners") + " must be four [x, y, z] points");
        } else {
          try {
            SpecularRegion check(sr.corners, sr.label);
          } catch (const InvalidArgument& e) {
            r.error(r.name("corners") + ": " + e.what());
          }
        }
        r.finish();
        out.push_back(sr);
      }
      cfg.cleanup.specular_regions = out;
    }
    c.finish();
  }

  {
    Reader r = top.table("retopo");
    auto& rp = cfg.retopo.ransac;
    r.number("epsilon", rp.epsilon, {0, 0.1, true});
    r.integer("min_inliers", rp.min_inliers, 3, 100000000);
    r.integer("max_planes", rp.max_planes, 1, 1000);
    r.integer("iterations", rp.iterations, 1, 1000000);
    r.number("sample_radius", rp.sample_radius, {0, 10});
    r.number("cluster_radius", rp.cluster_radius, {0, 10});
    r.number("voxel", cfg.retopo.voxel, {0, 1});
    r.number("snap_tol_deg", cfg.retopo.snap_tol_deg, {0, 45, true});
    r.integer("decimation_target", cfg.retopo.decimation_target, 4, 1000000000);
    r.integer("deviation_sample_cap", cfg.retopo.deviation_sample_cap, 1, 100000000);
    r.finish();
  }

  {
    Reader s = top.table("scene");
    s.integer("polygon_budget", cfg.scene.polygon_budget, 1, 1000000000);
    s.number("refresh_hz", cfg.scene.refresh_hz, {0, 1000, true});
    s.string("format", cfg.scene.format, {"glb", "gltf"});
    s.integer("shelves", cfg.scene.shelves, 0, 20);
    s.number("board", cfg.scene.board, {0, 0.1, true});
    if (auto tags = s.strings("collision_tags")) cfg.scene.collision_tags = *tags;
    if (auto fixtures = s.tables("fixtures")) {
      std::vector<FixtureConfig> out;
      std::set<std::string> names;
      for (auto& f : *fixtures) {
        FixtureConfig fc;
        f.string("name", fc.name);
        if (fc.name.empty()) f.error(f.name("name") + " is required");
        if (!fc.name.empty() && !names.insert(fc.name).second) f.error(f.name("name") + " '" + fc.name + "' repeats");
        const auto lo = f.vec3("min"), hi = f.vec3("max");
        if (!lo || !hi) {
          if (!f.node("min") || !f.node("max")) f.error(f.name("min") + " and " + f.name("max") + " are required");
        } else if (!((lo->array() < hi->array()).all())) {
          f.error(f.name("min") + " must be below " + f.name("max") + " on every axis");
        } else {
          fc.min = *lo;
          fc.max = *hi;
        }
        if (auto tags = f.strings("tags")) fc.tags = *tags;
        if (fc.tags.empty()) f.error(f.name("tags") + " needs at least one tag");
        fc.open_variant = !fc.tags.empty() && fc.tags.front() == "cabinet";
        f.boolean("open_variant", fc.open_variant);
        f.finish();
        out.push_back(fc);
      }
      cfg.scene.fixtures = out;
    }
    s.finish();
  }
  top.finish();

  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

PipelineConfig validate_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_config(ss.str(), base);
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  using J = nlohmann::ordered_json;
  J j;
  j["seed"] = seed;
  J in;
  in["source"] = input.source == InputSource::Scans ? "scans" : "synth_kitchen";
  in["scans"] = J::array();
  for (const auto& s : input.scans) in["scans"].push_back(s.generic_string());
  in["anchor"] = input.anchor;
  in["stray_fraction"] = input.stray_fraction;
  in["stray_clearance"] = input.stray_clearance;
  const auto& k = input.kitchen;
  in["kitchen"] = {{"length", k.length},         {"width", k.width},
                   {"height", k.height},         {"station_b_yaw_deg", k.station_b_yaw_deg},
                   {"specular_surfaces", k.specular_surfaces}, {"target_count", k.target_count}};
  const auto& s = input.scanner;
  in["scanner"] = {{"systematic_bias", s.systematic_bias},   {"range_noise_at_10m", s.range_noise_at_10m},
                   {"angular_step", s.angular_step},         {"vertical_fov_deg", s.vertical_fov_deg},
                   {"horizontal_fov_deg", s.horizontal_fov_deg}};
  j["input"] = in;
  const auto& d = registration.detection;
  j["registration"] = {{"patch_radius", d.patch_radius},
                       {"planarity_max", d.planarity_max},
                       {"contrast_min", d.contrast_min},
                       {"min_points", d.min_points},
                       {"link_radius", d.link_radius},
                       {"target_edge", d.target_edge},
                       {"match_tolerance", registration.matching.tolerance},
                       {"max_triples", registration.matching.max_triples}};
  J c = {{"k", cleanup.stray.k}, {"alpha", cleanup.stray.alpha}, {"ghost_epsilon", cleanup.ghost_epsilon}};
  if (cleanup.crop) {
    c["crop_min"] = vec_json(cleanup.crop->min);
    c["crop_max"] = vec_json(cleanup.crop->max);
  }
  if (cleanup.specular_regions) {
    c["specular_regions"] = J::array();
    for (const auto& r : *cleanup.specular_regions) {
      J corners = J::array();
      for (const auto& p : r.corners) corners.push_back(vec_json(p));
      c["specular_regions"].push_back({{"label", r.label}, {"corners", corners}});
    }
  }
  j["cleanup"] = c;
  const auto& rp = retopo.ransac;
  j["retopo"] = {{"epsilon", rp.epsilon},
                 {"min_inliers", rp.min_inliers},
                 {"max_planes", rp.max_planes},
                 {"iterations", rp.iterations},
                 {"sample_radius", rp.sample_radius},
                 {"cluster_radius", rp.cluster_radius},
                 {"voxel", retopo.voxel},
                 {"snap_tol_deg", retopo.snap_tol_deg},
                 {"decimation_target", retopo.decimation_target},
                 {"deviation_sample_cap", retopo.deviation_sample_cap}};
  J sc = {{"polygon_budget", scene.polygon_budget}, {"refresh_hz", scene.refresh_hz}, {"format", scene.format},
          {"shelves", scene.shelves},               {"board", scene.board},           {"collision_tags", scene.collision_tags}};
  if (scene.fixtures) {
    sc["fixtures"] = J::array();
    for (const auto& f : *scene.fixtures) {
      sc["fixtures"].push_back({{"name", f.name},
                                {"min", vec_json(f.min)},
                                {"max", vec_json(f.max)},
                                {"tags", f.tags},
                                {"open_variant", f.open_variant}});
    }
  }
  j["scene"] = sc;
  return j;
}

}  // namespace r2vr
