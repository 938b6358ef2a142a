#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "r2vr/geometry.hpp"
#include "r2vr/simscan.hpp"

using namespace r2vr;

namespace {

// Scanner whose zenith points along world +x, looking at a wall x = distance.
struct WallRig {
  SceneDescription scene;
  RigidTransform pose = RigidTransform::from_axis_angle(Vec3::UnitY(), std::numbers::pi / 2, Vec3::Zero());
  ScannerModel scanner;

  explicit WallRig(double distance) {
    scene.name = "wall";
    const double s = 5.0;
    scene.add_quad({distance, -s, -s}, {distance, s, -s}, {distance, s, s}, {distance, -s, s}, Material::Diffuse,
                   {200, 200, 200});
    scanner.systematic_bias = 0.0;
    scanner.vertical_fov_deg = 2.0;
    scanner.angular_step = 0.0025;
  }
};

bool same_cloud(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.records[i].position != b.records[i].position || a.records[i].color != b.records[i].color ||
        a.records[i].intensity != b.records[i].intensity) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(ScannerModel, Validation) {
  ScannerModel s;
  EXPECT_NO_THROW(s.validate());
  s.range_noise_at_10m = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.angular_step = -1;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.vertical_fov_deg = 361;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  EXPECT_DOUBLE_EQ(s.range_sigma(10.0), 0.0003);
  EXPECT_DOUBLE_EQ(s.range_sigma(1.0), 0.0001);
  EXPECT_DOUBLE_EQ(s.range_sigma(20.0), 0.0006);
}

TEST(ScannerModel, ElevationSpanCoversVerticalFov) {
  ScannerModel s;
  const double top = s.elevation(0) * 180 / std::numbers::pi;
  const double bottom = s.elevation(s.elevation_count() - 1) * 180 / std::numbers::pi;
  EXPECT_LT(top, 90.0);
  EXPECT_NEAR(bottom, -60.0, 0.5);
  EXPECT_EQ(s.azimuth_count(), static_cast<std::size_t>(2 * std::numbers::pi / 0.004));
}

TEST(Simulate, EmptySceneGivesEmptyCloud) {
  const auto r = simulate_scan(SceneDescription{}, RigidTransform::identity(), ScannerModel{});
  EXPECT_TRUE(r.cloud.empty());
  EXPECT_TRUE(r.ghost_point_ids.empty());
  EXPECT_EQ(r.cloud.stations.size(), 1u);
}

TEST(Simulate, RangeNoiseAtTenMetres) {
  WallRig rig(10.0);
  const auto r = simulate_scan(rig.scene, rig.pose, rig.scanner);
  ASSERT_GE(r.cloud.size(), 10000u);
  double sum = 0, sum2 = 0, expected = 0;
  for (const auto& p : r.cloud.records) {
    const Vec3 dir = rig.pose.apply_direction(p.position.normalized());
    const double truth = 10.0 / dir.x();
    const double e = p.position.norm() - truth;
    sum += e;
    sum2 += e * e;
    expected += rig.scanner.range_sigma(truth);
  }
  const double n = double(r.cloud.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sum2 / n - mean * mean);
  EXPECT_NEAR(sd, 0.0003, 0.05 * 0.0003);
  EXPECT_NEAR(sd, expected / n, 0.05 * expected / n);
  EXPECT_NEAR(mean, 0.0, 4 * sd / std::sqrt(n));
}

TEST(Simulate, SystematicBiasShiftsRanges) {
  WallRig rig(4.0);
  rig.scanner.systematic_bias = 0.001;
  rig.scanner.angular_step = 0.005;
  const auto r = simulate_scan(rig.scene, rig.pose, rig.scanner);
  double sum = 0;
  for (const auto& p : r.cloud.records) {
    const Vec3 dir = rig.pose.apply_direction(p.position.normalized());
    sum += p.position.norm() - 4.0 / dir.x();
  }
  EXPECT_NEAR(sum / double(r.cloud.size()), 0.001, 2e-5);
}

TEST(Simulate, ParallelMatchesSerialBitForBit) {
  const auto k = synth_kitchen(KitchenParams{}, 42);
  ScannerModel s;
  s.angular_step = 0.02;
  const auto a = simulate_scan(k.scene, k.stations[1], s, 1, "b");
  const auto b = simulate_scan_serial(k.scene, k.stations[1], s, 1, "b");
  EXPECT_TRUE(same_cloud(a.cloud, b.cloud));
  EXPECT_EQ(a.ghost_point_ids, b.ghost_point_ids);
  const auto c = simulate_scan(k.scene, k.stations[1], s, 1, "b");
  EXPECT_TRUE(same_cloud(a.cloud, c.cloud));
}

TEST(Simulate, SeedChangesNoise) {
  WallRig rig(3.0);
  const auto a = simulate_scan(rig.scene, rig.pose, rig.scanner);
  rig.scanner.seed = 43;
  const auto b = simulate_scan(rig.scene, rig.pose, rig.scanner);
  ASSERT_EQ(a.cloud.size(), b.cloud.size());
  EXPECT_FALSE(same_cloud(a.cloud, b.cloud));
}

TEST(Simulate, GhostsLieBeyondThePane) {
  SceneDescription scene;
  // Back wall at x = 3, a tilted mirror pane at x ~ 1.5 in front of it, side wall at y = 2.
  scene.add_quad({3, -3, -3}, {3, 3, -3}, {3, 3, 3}, {3, -3, 3}, Material::Diffuse, {180, 180, 180});
  scene.add_quad({-3, 2, -3}, {3, 2, -3}, {3, 2, 3}, {-3, 2, 3}, Material::Diffuse, {120, 120, 120});
  const std::array<Vec3, 4> pane = {Vec3(1.4, -0.4, -0.4), Vec3(1.6, 0.4, -0.4), Vec3(1.6, 0.4, 0.4),
                                    Vec3(1.4, -0.4, 0.4)};
  scene.add_quad(pane[0], pane[1], pane[2], pane[3], Material::Specular, {10, 10, 10});
  const SpecularRegion region(pane, "pane");
  const RigidTransform pose = RigidTransform::from_axis_angle(Vec3::UnitY(), std::numbers::pi / 2, Vec3::Zero());
  ScannerModel s;
  s.vertical_fov_deg = 60;
  s.angular_step = 0.01;
  const auto r = simulate_scan(scene, pose, s);
  ASSERT_GT(r.ghost_point_ids.size(), 50u);
  std::size_t gi = 0;
  for (std::uint32_t i = 0; i < r.cloud.size(); ++i) {
    const Vec3 world = pose.apply(r.cloud.records[i].position);
    const auto hit = region.segment_crossing(Vec3::Zero(), world);
    const bool ghost = gi < r.ghost_point_ids.size() && r.ghost_point_ids[gi] == i;
    if (ghost) {
      ++gi;
      ASSERT_TRUE(hit.has_value()) << i;
      EXPECT_GT(world.norm(), *hit);
    }
  }
  EXPECT_EQ(gi, r.ghost_point_ids.size());
}

TEST(PlaceTargets, AddsEightTrianglesAndRecordsCentroid) {
  SceneDescription s;
  TargetPlacement p;
  p.center = Vec3(1, 2, 3);
  p.normal = Vec3(0, -2, 0);
  const auto out = place_targets(s, {p});
  EXPECT_EQ(out.triangles.size(), 8u);
  ASSERT_EQ(out.targets.size(), 1u);
  EXPECT_LE((out.targets[0].centroid - Vec3(1, 2 - kTargetStandoff, 3)).norm(), 1e-15);
  EXPECT_NEAR(out.targets[0].normal.norm(), 1.0, 1e-15);
  // The four cells meet at the recorded centroid.
  for (std::size_t cell = 0; cell < 4; ++cell) {
    bool touches = false;
    for (std::size_t t = 2 * cell; t < 2 * cell + 2; ++t)
      for (const auto& v : out.triangles[t].v) touches = touches || (v - out.targets[0].centroid).norm() < 1e-12;
    EXPECT_TRUE(touches) << cell;
  }
  double area = 0;
  for (const auto& t : out.triangles) area += 0.5 * (t.v[1] - t.v[0]).cross(t.v[2] - t.v[0]).norm();
  EXPECT_NEAR(area, 0.15 * 0.15, 1e-12);
}

TEST(PlaceTargets, SixPlacementsGiveSixCentroids) {
  std::vector<TargetPlacement> ps(6);
  for (int i = 0; i < 6; ++i) ps[i].center = Vec3(i, 0, 1);
  EXPECT_EQ(place_targets(SceneDescription{}, ps).targets.size(), 6u);
}

TEST(PlaceTargets, ZeroNormalRejected) {
  TargetPlacement p;
  p.normal = Vec3::Zero();
  EXPECT_THROW(place_targets(SceneDescription{}, {p}), InvalidArgument);
}

TEST(Kitchen, DefaultHasTwoStationsAndMutuallyVisibleTargets) {
  const auto k = synth_kitchen(KitchenParams{}, 42);
  EXPECT_EQ(k.stations.size(), 2u);
  EXPECT_EQ(k.truth.station_poses.size(), 2u);
  EXPECT_EQ(k.truth.target_centroids.size(), k.scene.target_placements.size());
  int mutual = 0;
  for (const auto& c : k.truth.target_centroids) {
    bool all = true;
    for (const auto& st : k.stations) all = all && point_visible(k.scene, st.translation(), c);
    mutual += all;
  }
  EXPECT_GE(mutual, 6);
  EXPECT_EQ(k.specular_regions.size(), 2u);
  EXPECT_TRUE(k.room_box.valid());
}

TEST(Kitchen, DeterministicGivenSeed) {
  const auto a = synth_kitchen(KitchenParams{}, 7);
  const auto b = synth_kitchen(KitchenParams{}, 7);
  const auto c = synth_kitchen(KitchenParams{}, 8);
  EXPECT_EQ(a.truth.target_centroids, b.truth.target_centroids);
  EXPECT_NE(a.truth.target_centroids, c.truth.target_centroids);
}

TEST(Kitchen, NoSpecularSurfacesMeansNoGhosts) {
  KitchenParams p;
  p.specular_surfaces = false;
  const auto k = synth_kitchen(p, 42);
  ScannerModel s;
  s.angular_step = 0.01;
  for (const auto& st : k.stations) {
    const auto r = simulate_scan(k.scene, st, s);
    EXPECT_GT(r.cloud.size(), 1000u);
    EXPECT_TRUE(r.ghost_point_ids.empty());
  }
}

TEST(Kitchen, SpecularSurfacesProduceGhosts) {
  const auto k = synth_kitchen(KitchenParams{}, 42);
  ScannerModel s;
  s.angular_step = 0.01;
  std::size_t ghosts = 0;
  for (const auto& st : k.stations) ghosts += simulate_scan(k.scene, st, s).ghost_point_ids.size();
  EXPECT_GT(ghosts, 0u);
}

TEST(Kitchen, TooSmallRejected) {
  KitchenParams p;
  p.length = 1.0;
  EXPECT_THROW(synth_kitchen(p, 1), InvalidArgument);
  p = {};
  p.height = -1;
  EXPECT_THROW(synth_kitchen(p, 1), InvalidArgument);
}

TEST(InjectAirborne, PointsKeepClearance) {
  const auto k = synth_kitchen(KitchenParams{}, 42);
  PointCloud c;
  c.stations.push_back({0, "a", k.stations[0]});
  const auto ids = inject_airborne(c, k.scene, k.stations[0], 200, 0.5, 3);
  ASSERT_EQ(ids.size(), 200u);
  for (auto i : ids) {
    const Vec3 w = k.stations[0].apply(c.records[i].position);
    double best = 1e9;
    for (const auto& t : k.scene.triangles) best = std::min(best, point_triangle_distance(w, t.v[0], t.v[1], t.v[2]));
    EXPECT_GE(best, 0.5);
    EXPECT_TRUE(k.room_box.contains(w));
  }
}

TEST(SceneToml, RoundTrip) {
  const auto k = synth_kitchen(KitchenParams{}, 42);
  const std::string text = scene_to_toml(k.scene);
  const SceneDescription r = scene_from_toml(text);
  ASSERT_EQ(r.triangles.size(), k.scene.triangles.size());
  for (std::size_t i = 0; i < r.triangles.size(); ++i) {
    EXPECT_EQ(r.triangles[i].v, k.scene.triangles[i].v);
    EXPECT_EQ(r.triangles[i].material, k.scene.triangles[i].material);
    EXPECT_EQ(r.triangles[i].albedo, k.scene.triangles[i].albedo);
    EXPECT_EQ(r.triangles[i].target, k.scene.triangles[i].target);
  }
  ASSERT_EQ(r.targets.size(), k.scene.targets.size());
  for (std::size_t i = 0; i < r.targets.size(); ++i) {
    EXPECT_EQ(r.targets[i].centroid, k.scene.targets[i].centroid);
    EXPECT_EQ(r.targets[i].label, k.scene.targets[i].label);
  }
  EXPECT_EQ(r.target_placements.size(), k.scene.target_placements.size());
  EXPECT_THROW(scene_from_toml("name = 3\n[[triangle]]\nv = [1,2]\n"), InvalidArgument);
}

TEST(KeyedGaussian, MomentsAndIndependenceFromOrder) {
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = keyed_gaussian(42, std::uint64_t(i) / 500, std::uint64_t(i) % 500);
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
  EXPECT_EQ(keyed_gaussian(1, 2, 3), keyed_gaussian(1, 2, 3));
  EXPECT_NE(keyed_gaussian(1, 2, 3), keyed_gaussian(1, 3, 2));
}
