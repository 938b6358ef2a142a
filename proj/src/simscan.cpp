#include "r2vr/simscan.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "r2vr/bvh.hpp"
#include "r2vr/geometry.hpp"

namespace r2vr {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr int kFootprintSamples = 5;
constexpr double kMaxRange = 1000.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double to_unit_open(std::uint64_t h) { return (double(h >> 11) + 0.5) * 0x1.0p-53; }

double rgb_luminance(const Rgb& c) { return (0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2]) / 255.0; }

struct PreparedScene {
  const SceneDescription& scene;
  TriangleBvh bvh;
  std::vector<Vec3> normals;

  explicit PreparedScene(const SceneDescription& s) : scene(s) {
    std::vector<std::array<Vec3, 3>> tris;
    tris.reserve(s.triangles.size());
    for (const auto& t : s.triangles) {
      tris.push_back(t.v);
      normals.push_back((t.v[1] - t.v[0]).cross(t.v[2] - t.v[0]).normalized());
    }
    bvh = TriangleBvh(std::move(tris));
  }
};

Rgb checker_color(const TargetFrame& tf, const Vec3& q) {
  const Vec3 d = q - tf.centroid;
  const double u = d.dot(tf.u), v = d.dot(tf.v);
  const double h = 0.5 * tf.edge;
  if (std::abs(u) > h || std::abs(v) > h) return tf.background;
  const bool black = (u < 0) != (v < 0);
  return black ? Rgb{0, 0, 0} : Rgb{255, 255, 255};
}

// Colour a target return by averaging the checker over the beam footprint
// (one angular cell), so edge samples carry fractional coverage.
Rgb footprint_color(const TargetFrame& tf, const Mat3& rot, const Vec3& origin, double az, double el,
                    double step) {
  std::array<double, 3> acc{0, 0, 0};
  int used = 0;
  for (int i = 0; i < kFootprintSamples; ++i)
    for (int j = 0; j < kFootprintSamples; ++j) {
      const double a = az + step * ((i + 0.5) / kFootprintSamples - 0.5);
      const double e = el + step * ((j + 0.5) / kFootprintSamples - 0.5);
      const Vec3 dl(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
      const Vec3 dir = rot * dl;
      const double denom = dir.dot(tf.normal);
      if (std::abs(denom) < 1e-12) continue;
      const double t = (tf.centroid - origin).dot(tf.normal) / denom;
      if (t <= 0) continue;
      const Rgb c = checker_color(tf, origin + t * dir);
      for (int k = 0; k < 3; ++k) acc[k] += c[k];
      ++used;
    }
  if (used == 0) return tf.background;
  Rgb out;
  for (int k = 0; k < 3; ++k) out[k] = static_cast<std::uint8_t>(std::lround(acc[k] / used));
  return out;
}

struct RowOutput {
  std::vector<PointRecord> points;
  std::vector<std::uint32_t> ghosts;  // row-local indices
};

void simulate_row(const PreparedScene& ps, const RigidTransform& pose, const ScannerModel& sc, std::size_t row,
                  std::uint16_t station_id, RowOutput& out) {
  const double el = sc.elevation(row);
  const Vec3& origin = pose.translation();
  const Mat3& rot = pose.rotation();
  const std::size_t ncols = sc.azimuth_count();
  for (std::size_t col = 0; col < ncols; ++col) {
    const double az = sc.azimuth(col);
    const Vec3 dl(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const Vec3 dir = rot * dl;
    const auto hit = ps.bvh.intersect(origin, dir, 1e-6, kMaxRange);
    if (!hit) continue;
    const SceneTriangle& tri = ps.scene.triangles[hit->triangle];
    double path = hit->t;
    Rgb color = tri.albedo;
    bool ghost = false;
    if (tri.material == Material::Specular) {
      Vec3 n = ps.normals[hit->triangle];
      if (n.dot(dir) > 0) n = -n;
      const Vec3 mirror_point = origin + hit->t * dir;
      const Vec3 reflected = dir - 2.0 * dir.dot(n) * n;
      const auto second = ps.bvh.intersect(mirror_point, reflected, 1e-6, kMaxRange);
      if (!second || second->t < kMinGhostPath) continue;
      const SceneTriangle& tri2 = ps.scene.triangles[second->triangle];
      if (tri2.material == Material::Specular) continue;
      path += second->t;
      color = tri2.target >= 0 ? checker_color(ps.scene.targets[tri2.target], mirror_point + second->t * reflected)
                               : tri2.albedo;
      ghost = true;
    } else if (tri.target >= 0) {
      color = footprint_color(ps.scene.targets[tri.target], rot, origin, az, el, sc.angular_step);
    }
    const double range = path + sc.systematic_bias + sc.range_sigma(path) * keyed_gaussian(sc.seed, row, col);
    PointRecord r;
    r.position = range * dl;
    r.color = color;
    r.intensity = static_cast<float>(rgb_luminance(color));
    r.station_id = station_id;
    if (ghost) out.ghosts.push_back(static_cast<std::uint32_t>(out.points.size()));
    out.points.push_back(r);
  }
}

ScanResult assemble(std::vector<RowOutput>& rows, const RigidTransform& pose, std::uint16_t station_id,
                    std::string name) {
  ScanResult res;
  PointCloud& cloud = res.cloud;
  cloud.has_color = true;
  cloud.has_intensity = true;
  cloud.frame = CloudFrame::Local;
  cloud.stations.push_back({station_id, name.empty() ? "station_" + std::to_string(station_id) : std::move(name), pose});
  std::size_t total = 0;
  for (const auto& r : rows) total += r.points.size();
  cloud.records.reserve(total);
  for (auto& r : rows) {
    const auto offset = static_cast<std::uint32_t>(cloud.records.size());
    for (auto g : r.ghosts) res.ghost_point_ids.push_back(offset + g);
    cloud.records.insert(cloud.records.end(), r.points.begin(), r.points.end());
  }
  return res;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) { return splitmix64(seed ^ splitmix64(salt)); }

double keyed_gaussian(std::uint64_t seed, std::uint64_t row, std::uint64_t col) {
  const std::uint64_t h1 = splitmix64(seed ^ splitmix64((row << 32) ^ col ^ 0xA5A5A5A5ull));
  const std::uint64_t h2 = splitmix64(h1);
  const double u1 = to_unit_open(h1), u2 = to_unit_open(h2);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void ScannerModel::validate() const {
  if (!(range_noise_at_10m > 0)) throw InvalidArgument("scanner range_noise_at_10m must be > 0");
  if (!(angular_step > 0)) throw InvalidArgument("scanner angular_step must be > 0");
  if (!(vertical_fov_deg > 0 && vertical_fov_deg <= 360)) throw InvalidArgument("scanner vertical_fov must be in (0,360]");
  if (!(horizontal_fov_deg > 0 && horizontal_fov_deg <= 360)) {
    throw InvalidArgument("scanner horizontal_fov must be in (0,360]");
  }
  if (!std::isfinite(systematic_bias)) throw InvalidArgument("scanner systematic_bias must be finite");
}

double ScannerModel::range_sigma(double range) const { return std::max(1e-4, range_noise_at_10m * range / 10.0); }

std::size_t ScannerModel::azimuth_count() const {
  return static_cast<std::size_t>(std::floor(horizontal_fov_deg * kDeg / angular_step + 1e-9));
}

std::size_t ScannerModel::elevation_count() const {
  return static_cast<std::size_t>(std::floor(0.5 * vertical_fov_deg * kDeg / angular_step + 1e-9));
}

double ScannerModel::azimuth(std::size_t col) const {
  if (horizontal_fov_deg >= 360.0) return double(col) * angular_step;
  return -0.5 * horizontal_fov_deg * kDeg + (double(col) + 0.5) * angular_step;
}

double ScannerModel::elevation(std::size_t row) const {
  return 0.5 * std::numbers::pi - (double(row) + 0.5) * angular_step;
}

void SceneDescription::add_quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, Material m, Rgb albedo,
                                std::int32_t target) {
  triangles.push_back({{a, b, c}, m, albedo, target});
  triangles.push_back({{a, c, d}, m, albedo, target});
}

void SceneDescription::add_box(const Vec3& lo, const Vec3& hi, Rgb albedo) {
  const TriangleMesh box = make_box_mesh(lo, hi);
  for (const auto& t : box.triangles) {
    triangles.push_back({{box.vertices[t[0]], box.vertices[t[1]], box.vertices[t[2]]}, Material::Diffuse, albedo, -1});
  }
}

void SceneDescription::validate() const {
  for (const auto& t : triangles)
    for (const auto& v : t.v)
      if (!v.allFinite()) throw InvalidArgument("scene '" + name + "' has a non-finite vertex");
  for (const auto& t : targets)
    if (std::abs(t.normal.norm() - 1.0) > 1e-9) throw InvalidArgument("scene target normal is not unit length");
  for (const auto& t : triangles)
    if (t.target >= static_cast<std::int32_t>(targets.size())) throw InvalidArgument("scene triangle references a missing target");
}

namespace {

template <bool Parallel>
ScanResult simulate_impl(const SceneDescription& scene, const RigidTransform& pose, const ScannerModel& sc,
                         std::uint16_t station_id, std::string name) {
  sc.validate();
  scene.validate();
  const std::size_t nrows = sc.elevation_count();
  std::vector<RowOutput> rows(nrows);
  if (!scene.triangles.empty()) {
    const PreparedScene ps(scene);
    if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic, 4)
      for (long row = 0; row < static_cast<long>(nrows); ++row) {
        simulate_row(ps, pose, sc, static_cast<std::size_t>(row), station_id, rows[static_cast<std::size_t>(row)]);
      }
    } else {
      for (std::size_t row = 0; row < nrows; ++row) simulate_row(ps, pose, sc, row, station_id, rows[row]);
    }
  }
  return assemble(rows, pose, station_id, std::move(name));
}

}  // namespace

ScanResult simulate_scan(const SceneDescription& scene, const RigidTransform& station_pose, const ScannerModel& scanner,
                         std::uint16_t station_id, std::string station_name) {
  return simulate_impl<true>(scene, station_pose, scanner, station_id, std::move(station_name));
}

ScanResult simulate_scan_serial(const SceneDescription& scene, const RigidTransform& station_pose,
                                const ScannerModel& scanner, std::uint16_t station_id, std::string station_name) {
  return simulate_impl<false>(scene, station_pose, scanner, station_id, std::move(station_name));
}

SceneDescription place_targets(SceneDescription scene, const std::vector<TargetPlacement>& placements) {
  for (const auto& p : placements) {
    if (!(p.normal.norm() > 1e-12)) throw InvalidArgument("target placement '" + p.label + "' has a zero normal");
    if (!(p.edge > 0)) throw InvalidArgument("target placement '" + p.label + "' has a non-positive edge");
    if (!p.center.allFinite()) throw InvalidArgument("target placement '" + p.label + "' is not finite");
  }
  for (const auto& p : placements) {
    TargetFrame tf;
    tf.normal = p.normal.normalized();
    auto [u, v] = plane_basis(tf.normal);
    if (std::abs(tf.normal.z()) < 0.9) {
      u = Vec3::UnitZ().cross(tf.normal).normalized();
      v = tf.normal.cross(u);
    }
    const double a = p.rotation_deg * kDeg;
    tf.u = std::cos(a) * u + std::sin(a) * v;
    tf.v = tf.normal.cross(tf.u);
    tf.centroid = p.center + kTargetStandoff * tf.normal;
    tf.edge = p.edge;
    tf.background = p.background;
    tf.label = p.label;
    const auto index = static_cast<std::int32_t>(scene.targets.size());
    const double h = 0.5 * p.edge;
    for (int su = 0; su < 2; ++su)
      for (int sv = 0; sv < 2; ++sv) {
        const double u0 = su ? 0.0 : -h, u1 = su ? h : 0.0;
        const double v0 = sv ? 0.0 : -h, v1 = sv ? h : 0.0;
        auto at = [&](double uu, double vv) { return Vec3(tf.centroid + uu * tf.u + vv * tf.v); };
        const bool black = (su == 0) != (sv == 0);
        scene.add_quad(at(u0, v0), at(u1, v0), at(u1, v1), at(u0, v1), Material::Diffuse,
                       black ? Rgb{0, 0, 0} : Rgb{255, 255, 255}, index);
      }
    scene.targets.push_back(tf);
    scene.target_placements.push_back(p);
  }
  return scene;
}

bool point_visible(const SceneDescription& scene, const Vec3& origin, const Vec3& p, double tol) {
  std::vector<std::array<Vec3, 3>> tris;
  for (const auto& t : scene.triangles) tris.push_back(t.v);
  const TriangleBvh bvh(std::move(tris));
  const Vec3 d = p - origin;
  const double dist = d.norm();
  const auto hit = bvh.intersect(origin, d / dist, 1e-6, kMaxRange);
  return !hit || hit->t >= dist - tol;
}

std::vector<std::uint32_t> inject_airborne(PointCloud& cloud, const SceneDescription& scene,
                                           const RigidTransform& station_pose, std::size_t count,
                                           double min_clearance, std::uint64_t seed) {
  std::vector<std::uint32_t> ids;
  if (count == 0) return ids;
  if (scene.triangles.empty()) throw InvalidArgument("inject_airborne needs scene geometry");
  Bounds b;
  for (const auto& t : scene.triangles)
    for (const auto& v : t.v) b.expand(v);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(b.min.x(), b.max.x()), uy(b.min.y(), b.max.y()), uz(b.min.z(), b.max.z());
  const RigidTransform to_local = station_pose.inverse();
  const std::uint16_t sid = cloud.stations.empty() ? 0 : cloud.stations.front().id;
  std::size_t attempts = 0;
  while (ids.size() < count) {
    if (++attempts > count * 1000) throw InvalidArgument("inject_airborne: clearance leaves no free volume");
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    bool clear = true;
    for (const auto& t : scene.triangles) {
      if (point_triangle_distance(p, t.v[0], t.v[1], t.v[2]) < min_clearance) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    PointRecord r;
    r.position = to_local.apply(p);
    r.color = {128, 128, 128};
    r.intensity = static_cast<float>(rgb_luminance(r.color));
    r.station_id = sid;
    ids.push_back(static_cast<std::uint32_t>(cloud.records.size()));
    cloud.records.push_back(r);
  }
  cloud.invalidate_bounds();
  return ids;
}

KitchenScene synth_kitchen(const KitchenParams& p, std::uint64_t seed) {
  if (!(p.length > 0 && p.width > 0 && p.height > 0)) throw InvalidArgument("kitchen dimensions must be positive");
  if (p.length < 2.6 || p.width < 2.2 || p.height < p.upper_top + 0.2 || p.counter_depth + 1.0 > p.width ||
      p.upper_bottom <= p.counter_height + 0.35) {
    throw InvalidArgument("kitchen dimensions too small to place counters");
  }
  if (p.target_count < 3 || p.target_count > 8) throw InvalidArgument("kitchen target_count must be in [3, 8]");

  const double L = p.length, W = p.width, H = p.height;
  const double cd = p.counter_depth, ch = p.counter_height;
  const double ud = p.upper_depth, ub = p.upper_bottom, ut = p.upper_top;
  const Rgb wall{170, 165, 155}, floor_c{140, 120, 100}, ceiling{180, 180, 180};
  const Rgb counter{120, 115, 110}, cabinet{150, 130, 110}, appliance{90, 90, 95};

  KitchenScene k;
  SceneDescription& s = k.scene;
  s.name = "l_shaped_kitchen";
  const auto D = Material::Diffuse;
  s.add_quad({0, 0, 0}, {L, 0, 0}, {L, W, 0}, {0, W, 0}, D, floor_c);
  s.add_quad({0, 0, H}, {0, W, H}, {L, W, H}, {L, 0, H}, D, ceiling);
  s.add_quad({0, 0, 0}, {0, 0, H}, {L, 0, H}, {L, 0, 0}, D, wall);  // y = 0
  s.add_quad({0, W, 0}, {L, W, 0}, {L, W, H}, {0, W, H}, D, wall);  // y = W
  s.add_quad({0, 0, 0}, {0, W, 0}, {0, W, H}, {0, 0, H}, D, wall);  // x = 0
  s.add_quad({L, 0, 0}, {L, 0, H}, {L, W, H}, {L, W, 0}, D, wall);  // x = L

  const double run1_end = L - 1.0, run2_end = W - 1.0;
  k.fixtures = {
      {"counter_run_1", {0, 0, 0}, {run1_end, cd, ch}, {"counter"}},
      {"counter_run_2", {0, cd, 0}, {cd, run2_end, ch}, {"counter"}},
      {"upper_cabinet_run_1", {0, 0, ub}, {run1_end, ud, ut}, {"cabinet"}},
      {"upper_cabinet_run_2", {0, ud, ub}, {ud, run2_end, ut}, {"cabinet"}},
      {"microwave", {L - 1.9, 0, ch}, {L - 1.4, 0.4, ch + 0.3}, {"appliance"}},
  };
  for (const auto& f : k.fixtures) {
    const Rgb c = f.tags.front() == "counter" ? counter : f.tags.front() == "cabinet" ? cabinet : appliance;
    s.add_box(f.min, f.max, c);
  }

  if (p.specular_surfaces) {
    const double mx0 = L - 1.86, mx1 = L - 1.5, my = 0.405, mz0 = ch + 0.03, mz1 = ch + 0.27;
    const std::array<Vec3, 4> door = {Vec3(mx0, my, mz0), Vec3(mx1, my, mz0), Vec3(mx1, my, mz1), Vec3(mx0, my, mz1)};
    s.add_quad(door[0], door[1], door[2], door[3], Material::Specular, {40, 40, 45});
    k.specular_regions.emplace_back(door, "microwave_door");
    const double wx = L - 0.01, wy0 = 0.31 * W, wy1 = 0.69 * W;
    const std::array<Vec3, 4> pane = {Vec3(wx, wy0, 1.0), Vec3(wx, wy1, 1.0), Vec3(wx, wy1, 2.0), Vec3(wx, wy0, 2.0)};
    s.add_quad(pane[0], pane[1], pane[2], pane[3], Material::Specular, {200, 210, 220});
    k.specular_regions.emplace_back(pane, "window");
  }

  // Target slots on vertical surfaces seen by both stations.
  struct Slot {
    Vec3 center;
    Vec3 normal;
    Rgb background;
    const char* label;
  };
  const std::vector<Slot> slots = {
      {{0.30 * L, W, 1.6}, {0, -1, 0}, wall, "A090"},
      {{0.70 * L, W, 1.1}, {0, -1, 0}, wall, "A091"},
      {{L, 0.80 * W, 1.4}, {-1, 0, 0}, wall, "A092"},
      {{0.45 * L, ud, 0.5 * (ub + ut)}, {0, 1, 0}, cabinet, "A093"},
      {{0.42 * L, cd, 0.55}, {0, 1, 0}, counter, "A094"},
      {{cd, 0.45 * W, 0.55}, {1, 0, 0}, counter, "A095"},
      {{ud, 0.50 * W, 0.5 * (ub + ut)}, {1, 0, 0}, cabinet, "A096"},
      {{0.25 * L, 0, 0.5 * (ch + ub)}, {0, 1, 0}, wall, "A097"},
  };
  std::mt19937_64 rng(mix_seed(seed, 0x7a29e7));
  std::uniform_real_distribution<double> jitter(-p.target_jitter, p.target_jitter);
  std::uniform_real_distribution<double> spin(-20.0, 20.0);
  std::vector<TargetPlacement> placements;
  for (int i = 0; i < p.target_count; ++i) {
    const Slot& sl = slots[static_cast<std::size_t>(i)];
    const Vec3 n = sl.normal;
    const Vec3 horiz = Vec3::UnitZ().cross(n).normalized();
    const double jh = jitter(rng), jv = jitter(rng);
    TargetPlacement tp;
    tp.center = sl.center + jh * horiz + jv * Vec3::UnitZ();
    tp.normal = n;
    tp.edge = p.target_edge;
    tp.rotation_deg = spin(rng);
    tp.background = sl.background;
    tp.label = sl.label;
    placements.push_back(tp);
  }
  s = place_targets(std::move(s), placements);

  k.stations[0] = RigidTransform(Mat3::Identity(), Vec3(0.675 * L, 0.625 * W, p.station_height));
  k.stations[1] = RigidTransform::from_axis_angle(Vec3::UnitZ(), p.station_b_yaw_deg * kDeg,
                                                  Vec3(0.40 * L, 0.44 * W, p.station_height));
  k.truth.station_poses = {k.stations[0], k.stations[1]};
  for (const auto& t : s.targets) k.truth.target_centroids.push_back(t.centroid);
  k.truth.ghost_point_ids.resize(2);
  k.truth.stray_point_ids.resize(2);
  k.room_box = {Vec3(-0.05, -0.05, -0.05), Vec3(L + 0.05, W + 0.05, H + 0.05)};
  return k;
}

}  // namespace r2vr
