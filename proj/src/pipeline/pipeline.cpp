#include "r2vr/pipeline/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "r2vr/cleanup.hpp"
#include "r2vr/e57.hpp"
#include "r2vr/pipeline/exit_codes.hpp"
#include "r2vr/ply.hpp"
#include "r2vr/registration.hpp"
#include "r2vr/retopo.hpp"
#include "r2vr/scene.hpp"
#include "r2vr/simscan.hpp"

namespace r2vr {

namespace fs = std::filesystem;
using J = nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 9> kStageNames = {"simulate", "ingest", "register", "clean", "crop",
                                                         "retopo",   "scene",  "export",   "report"};

// Missing or stale intermediate; the stage cannot start.
class StageInputError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------- files

std::string sha256_hex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

J read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw StageInputError("missing intermediate '" + path.string() + "'");
  try {
    return J::parse(in);
  } catch (const J::exception& e) {
    throw FormatError("malformed json '" + path.string() + "': " + e.what());
  }
}

J vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

J pose_json(const RigidTransform& t) {
  const Eigen::Quaterniond q = t.quaternion();
  return {{"rotation_wxyz", {q.w(), q.x(), q.y(), q.z()}}, {"translation", vec_json(t.translation())}};
}

class StageContext {
 public:
  StageContext(const PipelineConfig& cfg, Stage stage)
      : cfg(cfg), stage(stage), seed(stage_seed(cfg.seed, stage)), root(cfg.output_dir) {}

  const PipelineConfig& cfg;
  Stage stage;
  std::uint64_t seed;
  fs::path root;
  StageRecord record;

  fs::path dir(Stage s) const { return root / std::string(stage_name(s)); }
  fs::path own_dir() const {
    fs::create_directories(dir(stage));
    return dir(stage);
  }

  // Sidecar next to each intermediate, so later stages can refuse stale files.
  void sidecar(const fs::path& file, const std::string& kind, std::size_t count) const {
    J meta = {{"tool_version", kToolVersion},
              {"schema_version", kManifestSchemaVersion},
              {"stage", stage_name(stage)},
              {"kind", kind},
              {"count", count}};
    write_text(file.string() + ".meta.json", meta.dump(2) + "\n");
  }

  void check_sidecar(const fs::path& file) const {
    if (!fs::exists(file)) throw StageInputError("missing intermediate '" + file.string() + "'");
    const J meta = read_json(file.string() + ".meta.json");
    const std::string v = meta.value("tool_version", "");
    if (v != kToolVersion) {
      throw StageInputError("version mismatch: '" + file.string() + "' was written by " + v + ", this is " +
                            kToolVersion);
    }
  }

  PointCloud load_cloud(const fs::path& file) const {
    check_sidecar(file);
    return read_ply(file);
  }

  // Relative to the output directory when inside it, so the manifest does
  // not depend on where the run was written.
  std::string display(const fs::path& file) const {
    const fs::path rel = fs::weakly_canonical(file).lexically_relative(fs::weakly_canonical(root));
    return !rel.empty() && *rel.begin() != ".." ? rel.generic_string() : file.generic_string();
  }

  void input(const std::string& key, const fs::path& file) { record.inputs[key] = display(file); }

  void output(const fs::path& file) {
    record.outputs["files"].push_back(
        {{"path", display(file)}, {"bytes", fs::file_size(file)}, {"sha256", sha256_hex(file)}});
  }

  void save_cloud(const PointCloud& c, const fs::path& file) {
    write_ply(c, file);
    sidecar(file, "point_cloud", c.size());
    output(file);
    output(file.string() + ".meta.json");
  }

  void save_json(const J& j, const fs::path& file) {
    write_text(file, j.dump(1) + "\n");
    output(file);
  }

  bool synthetic() const { return cfg.input.source == InputSource::SynthKitchen; }
};

// The kitchen is a pure function of config and seed, so every stage can
// rebuild it instead of reading simulate's outputs.
KitchenScene rebuild_kitchen(const PipelineConfig& cfg) {
  return synth_kitchen(cfg.input.kitchen, stage_seed(cfg.seed, Stage::Simulate));
}

std::vector<SpecularRegion> specular_regions(const StageContext& ctx) {
  if (ctx.cfg.cleanup.specular_regions) {
    std::vector<SpecularRegion> out;
    for (const auto& r : *ctx.cfg.cleanup.specular_regions) out.emplace_back(r.corners, r.label);
    return out;
  }
  if (ctx.synthetic()) return rebuild_kitchen(ctx.cfg).specular_regions;
  return {};
}

std::optional<CropBox> crop_box(const StageContext& ctx) {
  if (ctx.cfg.cleanup.crop) return ctx.cfg.cleanup.crop;
  if (ctx.synthetic()) return rebuild_kitchen(ctx.cfg).room_box;
  return std::nullopt;
}

// Ground truth in merged-cloud indices; empty for real scans.
struct MergedTruth {
  std::vector<std::uint8_t> ghost, stray;
  bool valid = false;
};

MergedTruth merged_truth(const StageContext& ctx, std::size_t merged_size) {
  MergedTruth t;
  if (!ctx.synthetic()) return t;
  const J truth = read_json(ctx.dir(Stage::Simulate) / "truth.json");
  t.ghost.assign(merged_size, 0);
  t.stray.assign(merged_size, 0);
  std::size_t offset = 0;
  for (const auto& scan : truth.at("scans")) {
    for (const auto& g : scan.at("ghost_point_ids")) t.ghost.at(offset + g.get<std::size_t>()) = 1;
    for (const auto& s : scan.at("stray_point_ids")) t.stray.at(offset + s.get<std::size_t>()) = 1;
    offset += scan.at("points").get<std::size_t>();
  }
  if (offset != merged_size) throw StageInputError("simulate truth does not match the registered cloud");
  t.valid = true;
  return t;
}

std::vector<Vec3> positions(const PointCloud& c) {
  std::vector<Vec3> p(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) p[i] = c.records[i].position;
  return p;
}

// ---------------------------------------------------------------- stages

void stage_simulate(StageContext& ctx) {
  const KitchenScene k = rebuild_kitchen(ctx.cfg);
  ScannerModel scanner = ctx.cfg.input.scanner;
  scanner.seed = mix_seed(ctx.seed, 1);
  const fs::path dir = ctx.own_dir();
  J truth = {{"scans", J::array()}};
  J scans = J::array();
  for (std::size_t i = 0; i < k.stations.size(); ++i) {
    ScanResult r = simulate_scan(k.scene, k.stations[i], scanner, static_cast<std::uint16_t>(i),
                                 "station_" + std::to_string(i));
    const std::size_t returns = r.cloud.size();
    const auto count = static_cast<std::size_t>(std::llround(ctx.cfg.input.stray_fraction * double(returns)));
    std::vector<std::uint32_t> strays;
    if (count > 0) {
      strays = inject_airborne(r.cloud, k.scene, k.stations[i], count, ctx.cfg.input.stray_clearance,
                               mix_seed(ctx.seed, 100 + i));
    }
    const fs::path file = dir / ("scan_" + std::to_string(i) + ".ply");
    ctx.save_cloud(r.cloud, file);
    truth["scans"].push_back({{"points", r.cloud.size()},
                              {"station_pose", pose_json(k.stations[i])},
                              {"ghost_point_ids", r.ghost_point_ids},
                              {"stray_point_ids", strays}});
    scans.push_back({{"points", r.cloud.size()}, {"ghosts", r.ghost_point_ids.size()}, {"strays", strays.size()}});
  }
  ctx.save_json(truth, dir / "truth.json");
  ctx.record.outputs["points"] = scans[0]["points"].get<std::size_t>() + scans[1]["points"].get<std::size_t>();
  ctx.record.metrics = {{"scene", k.scene.name},
                        {"triangles", k.scene.triangles.size()},
                        {"targets", k.scene.targets.size()},
                        {"scans", scans}};
}

void stage_ingest(StageContext& ctx) {
  std::vector<fs::path> sources;
  if (ctx.synthetic()) {
    for (int i = 0; i < 2; ++i) sources.push_back(ctx.dir(Stage::Simulate) / ("scan_" + std::to_string(i) + ".ply"));
  } else {
    sources = ctx.cfg.input.scans;
  }
  std::vector<PointCloud> clouds;
  for (const auto& src : sources) {
    if (!fs::exists(src)) throw IoError("input scan '" + src.string() + "' does not exist");
    if (src.extension() == ".e57") {
      for (auto& c : read_e57(src).clouds) clouds.push_back(std::move(c));
    } else {
      if (ctx.synthetic()) ctx.check_sidecar(src);
      clouds.push_back(read_ply(src));
    }
  }
  if (clouds.size() < 2) throw InvalidArgument("ingest needs at least two scans, found " + std::to_string(clouds.size()));
  if (ctx.cfg.input.anchor >= clouds.size()) throw InvalidArgument("input.anchor is past the last scan");

  const fs::path dir = ctx.own_dir();
  J scans = J::array(), files = J::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) ctx.record.inputs["scans"].push_back(ctx.display(sources[i]));
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    clouds[i].validate();
    const fs::path file = dir / ("scan_" + std::to_string(i) + ".ply");
    ctx.save_cloud(clouds[i], file);
    files.push_back(file.filename().string());
    const Bounds& b = clouds[i].bounds();
    scans.push_back({{"points", clouds[i].size()},
                     {"stations", clouds[i].stations.size()},
                     {"has_color", clouds[i].has_color},
                     {"has_intensity", clouds[i].has_intensity},
                     {"bounds_min", vec_json(b.min)},
                     {"bounds_max", vec_json(b.max)}});
    total += clouds[i].size();
  }
  ctx.save_json({{"scans", files}, {"anchor", ctx.cfg.input.anchor}}, dir / "index.json");
  ctx.record.outputs["points"] = total;
  ctx.record.metrics = {{"scan_count", clouds.size()}, {"scans", scans}};
}

void stage_register(StageContext& ctx) {
  const fs::path in_dir = ctx.dir(Stage::Ingest);
  const J index = read_json(in_dir / "index.json");
  std::vector<PointCloud> clouds;
  for (const auto& f : index.at("scans")) {
    ctx.record.inputs["scans"].push_back("ingest/" + f.get<std::string>());
    clouds.push_back(ctx.load_cloud(in_dir / f.get<std::string>()));
  }
  const std::size_t anchor = index.at("anchor").get<std::size_t>();
  if (anchor >= clouds.size()) throw StageInputError("ingest index names an anchor past the last scan");

  RegistrationParams params = ctx.cfg.registration;
  params.matching.seed = ctx.seed;
  const PointCloud& a = clouds[anchor];
  // The anchor's own pose (a georeference, or the simulated station) places
  // the merged cloud; the others follow from the target registration.
  const RigidTransform anchor_pose =
      a.frame == CloudFrame::Local && !a.stations.empty() ? a.stations.front().pose : RigidTransform::identity();
  std::vector<RigidTransform> poses(clouds.size(), anchor_pose);

  std::optional<J> truth;
  if (ctx.synthetic()) truth = read_json(ctx.dir(Stage::Simulate) / "truth.json");

  J pairs = J::array();
  double mean_sum = 0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (i == anchor) continue;
    const PairRegistration reg = register_pair(a, clouds[i], params);
    poses[i] = anchor_pose * reg.b_to_a;
    J p = {{"anchor", anchor},
           {"scan", i},
           {"targets_anchor", reg.targets_a.size()},
           {"targets_scan", reg.targets_b.size()},
           {"used_targets", reg.report.used_targets},
           {"mean_point_error_mm", reg.report.mean_point_error_mm},
           {"rms_mm", reg.report.rms_mm},
           {"per_target_residuals_mm", reg.report.per_target_residuals_mm},
           {"scan_to_anchor", pose_json(reg.b_to_a)}};
    if (truth) {
      const auto pose_of = [&](std::size_t s) {
        const J& q = truth->at("scans").at(s).at("station_pose");
        const auto& r = q.at("rotation_wxyz");
        const auto& t = q.at("translation");
        return RigidTransform::from_quaternion(
            Eigen::Quaterniond(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()),
            Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
      };
      const RigidTransform want = pose_of(anchor).inverse() * pose_of(i);
      p["rotation_error_deg"] = rotation_angle_between(reg.b_to_a.rotation(), want.rotation()) * 180 / std::numbers::pi;
      p["translation_error_mm"] = (reg.b_to_a.translation() - want.translation()).norm() * 1000;
    }
    mean_sum += reg.report.mean_point_error_mm;
    pairs.push_back(p);
    spdlog::info("register: scan {} -> {} with {} targets, mean point error {:.3f} mm", i, anchor,
                 reg.report.used_targets, reg.report.mean_point_error_mm);
  }
  const PointCloud merged = merge_clouds(clouds, poses);
  const fs::path file = ctx.own_dir() / "merged.ply";
  ctx.save_cloud(merged, file);
  ctx.record.outputs["points"] = merged.size();
  ctx.record.metrics = {{"mean_point_error_mm", mean_sum / double(pairs.size())}, {"pairs", pairs}};
}

void stage_clean(StageContext& ctx) {
  const fs::path in = ctx.dir(Stage::Register) / "merged.ply";
  ctx.input("cloud", in);
  const PointCloud merged = ctx.load_cloud(in);
  const auto regions = specular_regions(ctx);
  const GhostFilterResult ghosts = specular_ghost_filter(merged, regions, ctx.cfg.cleanup.ghost_epsilon);
  const StrayFilterResult strays = stray_point_filter(ghosts.filtered, ctx.cfg.cleanup.stray);

  J m = {{"specular_regions", regions.size()},
         {"ghost_removed", ghosts.flagged.size()},
         {"stray_removed", strays.removed.size()},
         {"stray_k", ctx.cfg.cleanup.stray.k},
         {"stray_alpha", ctx.cfg.cleanup.stray.alpha},
         {"stray_mean_distance", strays.mean_distance},
         {"stray_std_distance", strays.std_distance},
         {"stray_threshold", strays.threshold}};
  const MergedTruth truth = merged_truth(ctx, merged.size());
  if (truth.valid) {
    std::size_t ghost_true = 0, ghost_hit = 0;
    for (auto g : truth.ghost) ghost_true += g;
    for (auto id : ghosts.flagged) ghost_hit += truth.ghost[id];
    // Indices of the ghost-filtered cloud back into the merged cloud.
    std::vector<std::uint32_t> kept;
    kept.reserve(ghosts.filtered.size());
    std::vector<std::uint8_t> flagged(merged.size(), 0);
    for (auto id : ghosts.flagged) flagged[id] = 1;
    for (std::uint32_t i = 0; i < merged.size(); ++i)
      if (!flagged[i]) kept.push_back(i);
    std::size_t stray_total = 0, stray_hit = 0, genuine = 0, genuine_lost = 0;
    for (auto i : kept) {
      stray_total += truth.stray[i];
      genuine += !truth.stray[i] && !truth.ghost[i];
    }
    for (auto r : strays.removed) {
      const auto i = kept[r];
      if (truth.stray[i]) ++stray_hit;
      else if (!truth.ghost[i]) ++genuine_lost;
    }
    const auto ratio = [](std::size_t a, std::size_t b) { return b ? double(a) / double(b) : 1.0; };
    m["ghost_precision"] = ratio(ghost_hit, ghosts.flagged.size());
    m["ghost_recall"] = ratio(ghost_hit, ghost_true);
    m["stray_recall"] = ratio(stray_hit, stray_total);
    m["genuine_loss"] = ratio(genuine_lost, genuine);
  }
  const fs::path file = ctx.own_dir() / "cleaned.ply";
  ctx.save_cloud(strays.filtered, file);
  ctx.record.outputs["points"] = strays.filtered.size();
  ctx.record.metrics = m;
}

void stage_crop(StageContext& ctx) {
  const fs::path in = ctx.dir(Stage::Clean) / "cleaned.ply";
  ctx.input("cloud", in);
  const PointCloud cloud = ctx.load_cloud(in);
  const auto box = crop_box(ctx);
  PointCloud out = box ? crop(cloud, *box) : cloud;
  J m = {{"cropped_out", cloud.size() - out.size()}};
  if (box) {
    m["crop_min"] = vec_json(box->min);
    m["crop_max"] = vec_json(box->max);
  }
  const fs::path file = ctx.own_dir() / "cropped.ply";
  ctx.save_cloud(out, file);
  ctx.record.outputs["points"] = out.size();
  ctx.record.metrics = m;
}

void stage_retopo(StageContext& ctx) {
  const auto& rc = ctx.cfg.retopo;
  const fs::path in = ctx.dir(Stage::Crop) / "cropped.ply";
  ctx.input("cloud", in);
  const PointCloud cloud = ctx.load_cloud(in);
  const PointCloud sampled = rc.voxel > 0 ? voxel_downsample(cloud, rc.voxel) : cloud;
  const std::vector<Vec3> pts = positions(sampled);

  RansacParams rp = rc.ransac;
  rp.seed = ctx.seed;
  ManhattanFrame frame;
  auto segments = ransac_planes(pts, rp);
  if (segments.empty()) throw DegenerateConfiguration("retopo: no planes found");
  segments = snap_orthogonal(std::move(segments), pts, rc.snap_tol_deg, &frame);
  segments = rectangles_from_segments(std::move(segments), pts);
  classify_segments(segments, rc.snap_tol_deg);
  const TriangleMesh shell = build_shell(segments);
  const DecimationResult dec = decimate_qem(shell, rc.decimation_target);
  const DeviationReport dev = deviation(dec.mesh, positions(cloud), rc.deviation_sample_cap);

  const fs::path dir = ctx.own_dir();
  J segs = J::array();
  std::size_t covered = 0;
  for (const auto& s : segments) {
    J corners = J::array();
    for (const auto& c : s.rectangle) corners.push_back(vec_json(c));
    segs.push_back({{"label", s.label},
                    {"normal", vec_json(s.normal)},
                    {"offset", s.offset},
                    {"inliers", s.inlier_ids.size()},
                    {"rectangle", corners}});
    covered += s.inlier_ids.size();
  }
  ctx.save_json({{"segments", segs},
                 {"frame", {vec_json(frame.axes[0]), vec_json(frame.axes[1]), vec_json(frame.axes[2])}}},
                dir / "segments.json");
  const fs::path file = dir / "shell.ply";
  write_mesh_ply(dec.mesh, file);
  ctx.sidecar(file, "mesh", dec.mesh.triangle_count());
  ctx.output(file);
  ctx.output(file.string() + ".meta.json");
  ctx.record.outputs["triangles"] = dec.mesh.triangle_count();
  ctx.record.metrics = {{"sampled_points", pts.size()},
                        {"segments", segments.size()},
                        {"coverage", double(covered) / double(pts.size())},
                        {"shell_triangles", shell.triangle_count()},
                        {"decimated_triangles", dec.mesh.triangle_count()},
                        {"collapses", dec.collapses},
                        {"nonmanifold_edges", dec.nonmanifold_edges},
                        {"deviation_mean_mm", dev.mean_mm},
                        {"deviation_p95_mm", dev.p95_mm},
                        {"deviation_max_mm", dev.max_mm},
                        {"sample_count", dev.sample_count}};
  spdlog::info("retopo: {} planes, {} triangles, deviation mean {:.3f} mm", segments.size(),
               dec.mesh.triangle_count(), dev.mean_mm);
}

std::vector<FixtureConfig> fixtures_for(const StageContext& ctx) {
  if (ctx.cfg.scene.fixtures) return *ctx.cfg.scene.fixtures;
  std::vector<FixtureConfig> out;
  if (!ctx.synthetic()) return out;
  for (const auto& f : rebuild_kitchen(ctx.cfg).fixtures)
    out.push_back({f.name, f.min, f.max, f.tags, !f.tags.empty() && f.tags.front() == "cabinet"});
  return out;
}

void stage_scene(StageContext& ctx) {
  const auto& sc = ctx.cfg.scene;
  const fs::path in = ctx.dir(Stage::Retopo) / "shell.ply";
  ctx.input("shell", in);
  ctx.check_sidecar(in);
  TriangleMesh shell = read_mesh_ply(in);
  const Bounds room = shell.bounds();
  const Vec3 room_center = 0.5 * (room.min + room.max);

  std::vector<LabeledMesh> meshes{{"shell", std::move(shell)}};
  HierarchySpec spec;
  spec.entries.push_back({"architecture", "", "", {"architecture"}, {}, false});
  spec.entries.push_back({"room_shell", "architecture", "shell", {"architecture", "retopo_shell"}, {}, false});
  std::vector<std::string> groups;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t capsules = 0;
  for (const auto& f : fixtures_for(ctx)) {
    const std::string group = f.tags.front() + "s";
    if (std::find(groups.begin(), groups.end(), group) == groups.end()) {
      groups.push_back(group);
      spec.entries.push_back({group, "", "", {f.tags.front()}, {}, false});
    }
    const bool collide = std::any_of(f.tags.begin(), f.tags.end(), [&](const std::string& t) {
      return std::find(sc.collision_tags.begin(), sc.collision_tags.end(), t) != sc.collision_tags.end();
    });
    capsules += collide;
    meshes.push_back({f.name, make_box_mesh(f.min, f.max, f.tags.front())});
    spec.entries.push_back({f.name, group, f.name, f.tags, {}, collide});
    if (f.open_variant) {
      // Open face toward the room along the fixture's shallowest horizontal axis.
      const Vec3 ext = f.max - f.min;
      const int axis = ext.x() <= ext.y() ? 0 : 1;
      const int sign = room_center[axis] >= 0.5 * (f.min[axis] + f.max[axis]) ? +1 : -1;
      TriangleMesh open = make_open_shelf(f.min, f.max, axis, sign, sc.shelves, sc.board);
      open.face_labels.assign(open.triangle_count(), f.tags.front() + "_open");
      const std::string name = f.name + "_open";
      std::vector<std::string> tags = f.tags;
      tags.push_back("open_shelf");
      meshes.push_back({name, std::move(open)});
      spec.entries.push_back({name, group, name, tags, {}, collide});
      capsules += collide;
      pairs.emplace_back(f.name, name);
    }
  }
  SceneGraph g = assemble(meshes, spec);
  for (const auto& [a, b] : pairs) g = set_variant_pair(std::move(g), a, b);

  const fs::path file = ctx.own_dir() / "scene.glb";
  export_scene(g, file);
  ctx.sidecar(file, "scene", g.node_count());
  ctx.output(file);
  ctx.output(file.string() + ".meta.json");
  J variants = J::array();
  for (const auto& [a, b] : pairs) variants.push_back({{"A", a}, {"B", b}});
  ctx.record.outputs["nodes"] = g.node_count();
  ctx.record.metrics = {{"nodes", g.node_count()}, {"capsules", capsules}, {"variant_pairs", variants}};
}

J budget_json(const BudgetReport& r) {
  return {{"triangle_count", r.triangle_count},
          {"polygon_budget", r.polygon_budget},
          {"refresh_hz", r.refresh_hz},
          {"frame_budget_ms", r.frame_budget_ms_rounded()},
          {"pass", r.pass}};
}

void stage_export(StageContext& ctx) {
  const auto& sc = ctx.cfg.scene;
  const fs::path in = ctx.dir(Stage::Scene) / "scene.glb";
  ctx.input("scene", in);
  ctx.check_sidecar(in);
  const SceneGraph g = import_scene(in);
  const fs::path dir = ctx.own_dir();
  J budgets = J::object();
  bool all_pass = true;
  const auto emit = [&](const SceneGraph& resolved, const std::string& name) {
    const BudgetReport r = budget_report(resolved, sc.refresh_hz, sc.polygon_budget);
    const fs::path file = dir / ("scene_" + name + "." + sc.format);
    export_scene(resolved, file);
    ctx.output(file);
    if (sc.format == "gltf") ctx.output(fs::path(file).replace_extension(".bin"));
    budgets[name] = budget_json(r);
    all_pass = all_pass && r.pass;
    spdlog::info("export: variant {} has {} triangles, budget {}", name, r.triangle_count, r.pass ? "met" : "exceeded");
  };
  if (g.has_variants()) {
    emit(select_variant(g, Variant::A), "A");
    emit(select_variant(g, Variant::B), "B");
  } else {
    emit(g, "both");
  }
  ctx.record.metrics = {{"budget", budgets}, {"all_pass", all_pass}};
}

void stage_report(StageContext& ctx, const Manifest& so_far) {
  const fs::path file = ctx.own_dir() / "summary.txt";
  write_text(file, summary_table(so_far));
  ctx.output(file);
  J m = J::object();
  if (const auto* r = so_far.find(Stage::Register)) m["mean_point_error_mm"] = r->metrics.at("mean_point_error_mm");
  if (const auto* r = so_far.find(Stage::Retopo)) m["deviation_mean_mm"] = r->metrics.at("deviation_mean_mm");
  if (const auto* r = so_far.find(Stage::Export)) m["all_budgets_pass"] = r->metrics.at("all_pass");
  ctx.record.metrics = m;
}

StageRecord execute(const PipelineConfig& cfg, Stage stage, const Manifest& so_far) {
  StageContext ctx(cfg, stage);
  ctx.record.stage = std::string(stage_name(stage));
  ctx.record.seed = ctx.seed;
  ctx.record.outputs["files"] = J::array();
  const auto t0 = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::Simulate:
      if (!ctx.synthetic()) throw InvalidArgument("simulate only applies to source = \"synth_kitchen\"");
      stage_simulate(ctx);
      break;
    case Stage::Ingest: stage_ingest(ctx); break;
    case Stage::Register: stage_register(ctx); break;
    case Stage::Clean: stage_clean(ctx); break;
    case Stage::Crop: stage_crop(ctx); break;
    case Stage::Retopo: stage_retopo(ctx); break;
    case Stage::Scene: stage_scene(ctx); break;
    case Stage::Export: stage_export(ctx); break;
    case Stage::Report: stage_report(ctx, so_far); break;
  }
  ctx.record.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{}: done in {:.2f} s", ctx.record.stage, ctx.record.wall_time_s);
  return ctx.record;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitStage;
}

void write_manifest(const Manifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / kManifestFile, m.to_json().dump(2) + "\n");
}

J record_json(const StageRecord& r) {
  return {{"stage", r.stage},
          {"seed", r.seed},
          {"wall_time_s", r.wall_time_s},
          {"inputs", r.inputs},
          {"outputs", r.outputs},
          {"metrics", r.metrics}};
}

}  // namespace

// ---------------------------------------------------------------- public

std::string_view stage_name(Stage s) { return kStageNames[static_cast<std::size_t>(s)]; }

std::optional<Stage> stage_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == name) return kAllStages[i];
  return std::nullopt;
}

std::vector<Stage> planned_stages(const PipelineConfig& cfg) {
  std::vector<Stage> out;
  for (Stage s : kAllStages)
    if (s != Stage::Simulate || cfg.input.source == InputSource::SynthKitchen) out.push_back(s);
  return out;
}

std::uint64_t stage_seed(std::uint64_t master, Stage s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : stage_name(s)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return mix_seed(master, h);
}

nlohmann::ordered_json Manifest::to_json() const {
  J j;
  j["schema_version"] = schema_version;
  j["tool"] = "r2vr";
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["status"] = failure ? "failed" : "ok";
  j["config"] = config;
  j["stages"] = J::array();
  for (const auto& r : stages) j["stages"].push_back(record_json(r));
  if (failure) {
    j["failure"] = {{"stage", failure->stage}, {"message", failure->message}, {"exit_code", failure->exit_code}};
  }
  return j;
}

Manifest Manifest::from_json(const nlohmann::ordered_json& j) {
  Manifest m;
  m.schema_version = j.at("schema_version").get<int>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.value("config", J::object());
  for (const auto& s : j.at("stages")) {
    StageRecord r;
    r.stage = s.at("stage").get<std::string>();
    r.seed = s.at("seed").get<std::uint64_t>();
    r.wall_time_s = s.value("wall_time_s", 0.0);
    r.inputs = s.value("inputs", J::object());
    r.outputs = s.value("outputs", J::object());
    r.metrics = s.value("metrics", J::object());
    m.stages.push_back(std::move(r));
  }
  if (j.contains("failure")) {
    const auto& f = j["failure"];
    m.failure = StageFailure{f.at("stage").get<std::string>(), f.at("message").get<std::string>(),
                             f.value("exit_code", int(kExitStage))};
  }
  return m;
}

const StageRecord* Manifest::find(Stage s) const {
  for (const auto& r : stages)
    if (r.stage == stage_name(s)) return &r;
  return nullptr;
}

std::string canonical_manifest(const nlohmann::ordered_json& manifest) {
  J j = manifest;
  if (j.contains("stages"))
    for (auto& s : j["stages"]) s.erase("wall_time_s");
  return j.dump(2);
}

Manifest run_pipeline(const PipelineConfig& cfg) {
  Manifest m;
  m.seed = cfg.seed;
  m.config = cfg.to_json();
  fs::create_directories(cfg.output_dir);
  for (Stage s : planned_stages(cfg)) {
    spdlog::info("{}: start", stage_name(s));
    try {
      m.stages.push_back(execute(cfg, s, m));
    } catch (const std::exception& e) {
      m.failure = StageFailure{std::string(stage_name(s)), e.what(), exit_code_for(e)};
      spdlog::error("{}: {}", stage_name(s), e.what());
      try {
        write_manifest(m, cfg.output_dir);
      } catch (const std::exception& w) {
        spdlog::error("could not write the partial manifest: {}", w.what());
      }
      throw PipelineError(*m.failure);
    }
    write_manifest(m, cfg.output_dir);
  }
  return m;
}

StageRecord run_single_stage(const PipelineConfig& cfg, Stage stage) {
  Manifest m;
  const fs::path path = cfg.output_dir / kManifestFile;
  if (fs::exists(path)) {
    m = Manifest::from_json(read_json(path));
  }
  m.seed = cfg.seed;
  m.config = cfg.to_json();
  m.failure.reset();
  // Keep the records of stages that run before this one.
  const auto plan = planned_stages(cfg);
  const auto pos = std::find(plan.begin(), plan.end(), stage);
  std::erase_if(m.stages, [&](const StageRecord& r) {
    const auto s = stage_from_name(r.stage);
    return !s || std::find(plan.begin(), pos, *s) == pos;
  });
  try {
    m.stages.push_back(execute(cfg, stage, m));
  } catch (const std::exception& e) {
    m.failure = StageFailure{std::string(stage_name(stage)), e.what(), exit_code_for(e)};
    try {
      write_manifest(m, cfg.output_dir);
    } catch (const std::exception&) {
    }
    throw PipelineError(*m.failure);
  }
  write_manifest(m, cfg.output_dir);
  return m.stages.back();
}

Manifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / kManifestFile;
  if (!fs::exists(path)) throw IoError("no manifest in '" + dir.string() + "'");
  std::ifstream in(path);
  try {
    return Manifest::from_json(J::parse(in));
  } catch (const J::exception& e) {
    throw FormatError("malformed manifest '" + path.string() + "': " + e.what());
  }
}

std::string summary_table(const Manifest& m) {
  std::ostringstream os;
  os << "r2vr " << m.tool_version << "  seed " << m.seed << "  status " << (m.failure ? "failed" : "ok") << "\n";
  os << std::left << std::setw(10) << "stage" << std::right << std::setw(12) << "points" << std::setw(12)
     << "triangles" << "  key metrics\n";
  const auto num = [](const J& j, const char* key) -> std::string {
    if (!j.contains(key)) return "-";
    std::ostringstream s;
    s << j[key].get<std::size_t>();
    return s.str();
  };
  for (const auto& r : m.stages) {
    os << std::left << std::setw(10) << r.stage << std::right << std::setw(12) << num(r.outputs, "points")
       << std::setw(12) << num(r.outputs, "triangles") << "  ";
    std::ostringstream k;
    k << std::fixed << std::setprecision(3);
    const J& x = r.metrics;
    if (r.stage == "register") {
      k << "mean_point_error_mm=" << x.at("mean_point_error_mm").get<double>();
    } else if (r.stage == "clean") {
      k << "ghost_removed=" << x.at("ghost_removed").get<std::size_t>()
        << " stray_removed=" << x.at("stray_removed").get<std::size_t>();
    } else if (r.stage == "crop") {
      k << "cropped_out=" << x.at("cropped_out").get<std::size_t>();
    } else if (r.stage == "retopo") {
      k << "segments=" << x.at("segments").get<std::size_t>() << " deviation_mean_mm=" << x.at("deviation_mean_mm").get<double>()
        << " p95=" << x.at("deviation_p95_mm").get<double>();
    } else if (r.stage == "export") {
      for (const auto& [name, b] : x.at("budget").items()) {
        k << name << ": " << b.at("triangle_count").get<std::size_t>() << " tris "
          << (b.at("pass").get<bool>() ? "pass" : "FAIL") << " (" << std::setprecision(1)
          << b.at("frame_budget_ms").get<double>() << " ms)  " << std::setprecision(3);
      }
    }
    os << k.str() << "\n";
  }
  if (m.failure) os << "failed in " << m.failure->stage << ": " << m.failure->message << "\n";
  return os.str();
}

}  // namespace r2vr
