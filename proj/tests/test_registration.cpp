#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "r2vr/registration.hpp"
#include "r2vr/simscan.hpp"

using namespace r2vr;

namespace {

// Expected mean residual for six fixed targets with 0.5 mm per-axis jitter,
// from tests/oracles/mc_registration.py (numpy, 10,000 trials).
constexpr double kMonteCarloMeanErrorMm = 0.651021;

RigidTransform random_transform(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return RigidTransform::from_quaternion(q, Vec3(u(rng), u(rng), u(rng)));
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n, double spread = 3.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  std::vector<Vec3> p(n);
  for (auto& x : p) x = Vec3(u(rng), u(rng), u(rng));
  return p;
}

// Horn's closed-form unit-quaternion solution, kept here as an independent oracle.
RigidTransform horn(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  Vec3 ca = Vec3::Zero(), cb = Vec3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca += a[i];
    cb += b[i];
  }
  ca /= double(a.size());
  cb /= double(b.size());
  Mat3 s = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ca) * (b[i] - cb).transpose();
  Eigen::Matrix4d n;
  n << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(n);
  const Eigen::Vector4d v = es.eigenvectors().col(3);
  const Eigen::Quaterniond q(v[0], v[1], v[2], v[3]);
  const Mat3 r = q.normalized().toRotationMatrix();
  return RigidTransform(r, cb - r * ca);
}

std::vector<CheckerTarget> as_targets(const std::vector<Vec3>& pts) {
  std::vector<CheckerTarget> t(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) t[i].centroid = pts[i];
  return t;
}

const std::vector<Vec3> kSixTargets = {{1.20, 3.20, 1.60}, {2.80, 3.20, 1.10}, {4.00, 2.56, 1.40},
                                       {1.80, 0.35, 1.85}, {0.60, 1.44, 0.55}, {0.35, 1.60, 1.85}};

struct KitchenScans {
  KitchenScene kitchen;
  std::array<ScanResult, 2> scans;
};

const KitchenScans& kitchen_scans(double bias, bool specular) {
  static std::map<std::pair<double, bool>, KitchenScans> cache;
  auto it = cache.find({bias, specular});
  if (it != cache.end()) return it->second;
  KitchenParams p;
  p.specular_surfaces = specular;
  KitchenScans ks{synth_kitchen(p, 42), {}};
  ScannerModel s;
  s.systematic_bias = bias;
  for (int i = 0; i < 2; ++i) ks.scans[i] = simulate_scan(ks.kitchen.scene, ks.kitchen.stations[i], s, i);
  return cache.emplace(std::make_pair(bias, specular), std::move(ks)).first->second;
}

}  // namespace

TEST(RigidTransform, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto t = random_transform(rng);
    EXPECT_TRUE(t.is_proper(1e-9));
    EXPECT_LE((t * t.inverse()).max_abs_difference(RigidTransform::identity()), 1e-9);
    EXPECT_LE((t.inverse() * t).max_abs_difference(RigidTransform::identity()), 1e-9);
  }
}

TEST(EstimateRigid, IdentityPairs) {
  std::mt19937_64 rng(2);
  const auto a = random_points(rng, 8);
  EXPECT_LE(estimate_rigid(a, a).max_abs_difference(RigidTransform::identity()), 1e-12);
}

TEST(EstimateRigid, RecoversPlantedTransforms) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t0 = random_transform(rng);
    const auto a = random_points(rng, 10);
    std::vector<Vec3> b;
    for (const auto& p : a) b.push_back(t0.apply(p));
    EXPECT_LE(estimate_rigid(a, b).max_abs_difference(t0), 1e-9) << trial;
  }
}

TEST(EstimateRigid, ThreeNonCollinearPointsAreEnough) {
  std::mt19937_64 rng(4);
  const auto t0 = random_transform(rng);
  const std::vector<Vec3> a = {{0, 0, 0}, {1, 0, 0}, {0, 0.5, 0}};
  std::vector<Vec3> b;
  for (const auto& p : a) b.push_back(t0.apply(p));
  EXPECT_LE(estimate_rigid(a, b).max_abs_difference(t0), 1e-9);
}

TEST(EstimateRigid, CollinearSourceRejected) {
  const std::vector<Vec3> a = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  const std::vector<Vec3> b = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  EXPECT_THROW(estimate_rigid(a, b), DegenerateConfiguration);
  EXPECT_THROW(estimate_rigid(std::vector<Vec3>{a[0], a[1]}, std::vector<Vec3>{b[0], b[1]}), DegenerateConfiguration);
}

TEST(EstimateRigid, NeverReturnsAReflection) {
  // Mirror-image targets: the best proper rotation, not the reflection.
  const std::vector<Vec3> a = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0.2}};
  std::vector<Vec3> b;
  for (const auto& p : a) b.push_back(Vec3(-p.x(), p.y(), p.z()));
  EXPECT_TRUE(estimate_rigid(a, b).is_proper(1e-9));
}

TEST(EstimateRigid, AgreesWithHornOnNoisyData) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 0.002);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t0 = random_transform(rng);
    const auto a = random_points(rng, 12);
    std::vector<Vec3> b;
    for (const auto& p : a) b.push_back(t0.apply(p) + Vec3(g(rng), g(rng), g(rng)));
    EXPECT_LE(estimate_rigid(a, b).max_abs_difference(horn(a, b)), 1e-9);
  }
}

TEST(Report, PerfectPairsHaveZeroError) {
  const auto rep = registration_report(RigidTransform::identity(), kSixTargets, kSixTargets);
  EXPECT_EQ(rep.mean_point_error_mm, 0.0);
  EXPECT_EQ(rep.rms_mm, 0.0);
  EXPECT_EQ(rep.used_targets, 6u);
}

TEST(Report, MeanIsArithmeticMeanAndBoundedByRms) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 0.001);
  std::vector<Vec3> b;
  for (const auto& p : kSixTargets) b.push_back(p + Vec3(g(rng), g(rng), g(rng)));
  const auto t = estimate_rigid(kSixTargets, b);
  const auto rep = registration_report(t, kSixTargets, b);
  double s = 0;
  for (double r : rep.per_target_residuals_mm) s += r;
  EXPECT_NEAR(rep.mean_point_error_mm, s / 6.0, 1e-12 * rep.mean_point_error_mm);
  EXPECT_LE(rep.mean_point_error_mm, rep.rms_mm);
  EXPECT_THROW(registration_report(t, {}, {}), InvalidArgument);
}

TEST(Report, ResidualsInvariantUnderCommonRigidMotion) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.001);
  std::vector<Vec3> b;
  for (const auto& p : kSixTargets) b.push_back(p + Vec3(g(rng), g(rng), g(rng)));
  const auto base = registration_report(estimate_rigid(kSixTargets, b), kSixTargets, b);
  for (int k = 0; k < 10; ++k) {
    const auto m = random_transform(rng);
    std::vector<Vec3> ma, mb;
    for (std::size_t i = 0; i < b.size(); ++i) {
      ma.push_back(m.apply(kSixTargets[i]));
      mb.push_back(m.apply(b[i]));
    }
    const auto rep = registration_report(estimate_rigid(ma, mb), ma, mb);
    for (std::size_t i = 0; i < b.size(); ++i) {
      EXPECT_NEAR(rep.per_target_residuals_mm[i], base.per_target_residuals_mm[i], 1e-9 * 1000);
    }
  }
}

TEST(Report, MonteCarloMeanErrorMatchesOracle) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.0005);
  const int trials = 10000;
  double sum = 0;
  for (int k = 0; k < trials; ++k) {
    const auto t0 = random_transform(rng);
    std::vector<Vec3> b;
    for (const auto& p : kSixTargets) b.push_back(t0.apply(p) + Vec3(g(rng), g(rng), g(rng)));
    sum += registration_report(estimate_rigid(kSixTargets, b), kSixTargets, b).mean_point_error_mm;
  }
  EXPECT_NEAR(sum / trials, kMonteCarloMeanErrorMm, 0.10 * kMonteCarloMeanErrorMm);
}

TEST(MatchTargets, IdenticalListsPairIdentically) {
  const auto t = as_targets(kSixTargets);
  const auto m = match_targets(t, t);
  ASSERT_EQ(m.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(m[i].index_a, i);
    EXPECT_EQ(m[i].index_b, i);
    EXPECT_LE(m[i].residual, 1e-12);
  }
}

TEST(MatchTargets, RecoversPlantedPermutation) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.0005);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t0 = random_transform(rng);
    std::vector<std::size_t> perm(kSixTargets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec3> b(kSixTargets.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      b[perm[i]] = t0.apply(kSixTargets[i]) + Vec3(g(rng), g(rng), g(rng));
    }
    const auto m = match_targets(as_targets(kSixTargets), as_targets(b));
    ASSERT_EQ(m.size(), 6u);
    for (const auto& c : m) EXPECT_EQ(c.index_b, perm[c.index_a]);
  }
}

TEST(MatchTargets, SpuriousTargetStaysUnmatched) {
  std::mt19937_64 rng(10);
  const auto t0 = random_transform(rng);
  std::vector<Vec3> b;
  for (const auto& p : kSixTargets) b.push_back(t0.apply(p));
  b.insert(b.begin() + 2, Vec3(40, -30, 12));
  const auto m = match_targets(as_targets(kSixTargets), as_targets(b));
  ASSERT_EQ(m.size(), 6u);
  for (const auto& c : m) EXPECT_NE(c.index_b, 2u);
}

TEST(MatchTargets, InvariantToInputOrder) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.0008);
  const auto t0 = random_transform(rng);
  std::vector<Vec3> a = kSixTargets, b;
  a.push_back({2.0, 1.0, 2.4});
  for (const auto& p : a) b.push_back(t0.apply(p) + Vec3(g(rng), g(rng), g(rng)));
  b.push_back({9, 9, 9});
  const auto ref = match_targets(as_targets(a), as_targets(b));
  for (int k = 0; k < 10; ++k) {
    std::vector<std::size_t> pa(a.size()), pb(b.size());
    std::iota(pa.begin(), pa.end(), 0);
    std::iota(pb.begin(), pb.end(), 0);
    std::shuffle(pa.begin(), pa.end(), rng);
    std::shuffle(pb.begin(), pb.end(), rng);
    std::vector<Vec3> sa, sb;
    for (auto i : pa) sa.push_back(a[i]);
    for (auto j : pb) sb.push_back(b[j]);
    auto m = match_targets(as_targets(sa), as_targets(sb));
    std::vector<std::pair<std::size_t, std::size_t>> got, want;
    for (const auto& c : m) got.emplace_back(pa[c.index_a], pb[c.index_b]);
    for (const auto& c : ref) want.emplace_back(c.index_a, c.index_b);
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, want);
  }
}

TEST(MatchTargets, InconsistentListsFail) {
  const std::vector<Vec3> b = {{0, 0, 0}, {10, 0, 0}, {0, 7, 0}, {0, 0, 13}};
  EXPECT_THROW(match_targets(as_targets(kSixTargets), as_targets(b)), MatchFailure);
  EXPECT_THROW(match_targets(as_targets({kSixTargets[0], kSixTargets[1]}), as_targets(kSixTargets)), MatchFailure);
}

TEST(DetectTargets, PlainGrayWallHasNoDetections) {
  SceneDescription s;
  s.add_quad({2, -2, -2}, {2, 2, -2}, {2, 2, 2}, {2, -2, 2}, Material::Diffuse, {128, 128, 128});
  ScannerModel sc;
  sc.angular_step = 0.003;
  const auto r = simulate_scan(s, RigidTransform::identity(), sc);
  ASSERT_GT(r.cloud.size(), 10000u);
  EXPECT_TRUE(detect_targets(r.cloud).empty());
}

TEST(DetectTargets, RequiresColourOrIntensity) {
  PointCloud c;
  c.stations.push_back({});
  c.records.push_back({});
  EXPECT_THROW(detect_targets(c), InvalidArgument);
}

TEST(DetectTargets, SixTargetKitchenWithinOneMillimetre) {
  KitchenParams p;
  p.target_count = 6;
  p.specular_surfaces = false;
  const auto k = synth_kitchen(p, 42);
  ScannerModel sc;
  sc.systematic_bias = 0.0;
  for (int s = 0; s < 2; ++s) {
    const auto r = simulate_scan(k.scene, k.stations[s], sc, s);
    const auto det = detect_targets(r.cloud);
    EXPECT_EQ(det.size(), 6u) << "station " << s;
    for (const auto& d : det) {
      const Vec3 w = k.stations[s].apply(d.centroid);
      double best = 1e9;
      for (const auto& gt : k.truth.target_centroids) best = std::min(best, (w - gt).norm());
      EXPECT_LE(best, 0.001) << "station " << s;
      EXPECT_NEAR(d.normal.norm(), 1.0, 1e-9);
      EXPECT_GE(d.support_count, DetectionParams{}.min_points);
    }
  }
}

TEST(DetectTargets, BiasShiftsCentroidsAlongTheRay) {
  const auto& ks = kitchen_scans(0.001, true);
  for (int s = 0; s < 2; ++s) {
    std::size_t close = 0;
    for (const auto& d : detect_targets(ks.scans[s].cloud)) {
      const Vec3 w = ks.kitchen.stations[s].apply(d.centroid);
      for (const auto& gt : ks.kitchen.truth.target_centroids) {
        const Vec3 dir = (gt - ks.kitchen.stations[s].translation()).normalized();
        if ((w - (gt + 0.001 * dir)).norm() <= 0.001) ++close;
      }
    }
    EXPECT_GE(close, 6u);
  }
}

TEST(DetectTargets, GrazingTargetAbsentOrLowConfidence) {
  SceneDescription s;
  s.add_quad({-1, 0, -1}, {5, 0, -1}, {5, 0, 1}, {-1, 0, 1}, Material::Diffuse, {160, 160, 160});
  TargetPlacement tp;
  tp.center = Vec3(2.4, 0, 0);
  tp.normal = Vec3::UnitY();
  s = place_targets(s, {tp});
  const Vec3 station(0, 0.3, 0);
  const double incidence = std::acos(0.3 / (tp.center - station).norm()) * 180 / std::numbers::pi;
  ASSERT_GT(incidence, 80.0);
  ScannerModel sc;
  sc.angular_step = 0.002;
  const auto r = simulate_scan(s, RigidTransform(Mat3::Identity(), station), sc);
  for (const auto& d : detect_targets(r.cloud)) EXPECT_LT(d.confidence, 0.5);
}

TEST(DetectTargets, BothStationsSeeAtLeastFourTargets) {
  const auto& ks = kitchen_scans(0.001, true);
  for (int s = 0; s < 2; ++s) {
    std::size_t hits = 0;
    for (const auto& gt : ks.kitchen.truth.target_centroids) {
      for (const auto& d : detect_targets(ks.scans[s].cloud)) {
        if ((ks.kitchen.stations[s].apply(d.centroid) - gt).norm() < 0.005) {
          ++hits;
          break;
        }
      }
    }
    EXPECT_GE(hits, 4u);
  }
}

TEST(RegisterPair, KitchenStationsUseAtLeastFourTargets) {
  const auto& ks = kitchen_scans(0.001, true);
  const auto res = register_pair(ks.scans[0].cloud, ks.scans[1].cloud);
  EXPECT_GE(res.report.used_targets, 4u);
  EXPECT_LE(res.report.mean_point_error_mm, 1.5);
  const RigidTransform truth = ks.kitchen.stations[0].inverse() * ks.kitchen.stations[1];
  EXPECT_LE(rotation_angle_between(res.b_to_a.rotation(), truth.rotation()) * 180 / std::numbers::pi, 0.05);
  EXPECT_LE((res.b_to_a.translation() - truth.translation()).norm(), 0.001);
}

TEST(RegisterPair, SelfRegistrationIsIdentity) {
  const auto& ks = kitchen_scans(0.001, true);
  const auto res = register_pair(ks.scans[1].cloud, ks.scans[1].cloud);
  EXPECT_LE(res.b_to_a.max_abs_difference(RigidTransform::identity()), 1e-6);
  EXPECT_LE(res.report.mean_point_error_mm, 0.3);
}

TEST(RegisterPair, DisjointTargetsFailToMatch) {
  auto room = [](const std::vector<Vec3>& centers) {
    SceneDescription s;
    s.add_quad({-3, -3, -1.5}, {3, -3, -1.5}, {3, 3, -1.5}, {-3, 3, -1.5}, Material::Diffuse, {150, 150, 150});
    s.add_quad({3, -3, -1.5}, {3, 3, -1.5}, {3, 3, 1.5}, {3, -3, 1.5}, Material::Diffuse, {150, 150, 150});
    s.add_quad({-3, 3, -1.5}, {3, 3, -1.5}, {3, 3, 1.5}, {-3, 3, 1.5}, Material::Diffuse, {150, 150, 150});
    std::vector<TargetPlacement> ps;
    for (const auto& c : centers) {
      TargetPlacement p;
      p.center = c;
      p.normal = c.x() == 3 ? Vec3(-1, 0, 0) : Vec3(0, -1, 0);
      p.background = {150, 150, 150};
      ps.push_back(p);
    }
    return place_targets(s, ps);
  };
  ScannerModel sc;
  sc.angular_step = 0.003;
  const auto a = simulate_scan(room({{3, -1, 0}, {3, 1.2, 0.6}, {-1, 3, -0.4}, {1, 3, 0.9}}),
                               RigidTransform::identity(), sc);
  const auto b = simulate_scan(room({{3, -2.1, 0.3}, {3, 0.4, -0.9}, {-2.2, 3, 0.1}, {0.3, 3, 1.1}}),
                               RigidTransform::identity(), sc);
  ASSERT_GE(detect_targets(a.cloud).size(), 3u);
  EXPECT_THROW(register_pair(a.cloud, b.cloud), MatchFailure);
}

TEST(MergeClouds, SingleCloudWithIdentityIsUnchanged) {
  const auto& ks = kitchen_scans(0.001, true);
  PointCloud c = ks.scans[0].cloud;
  c.stations[0].pose = RigidTransform::identity();
  const RigidTransform id;
  const auto m = merge_clouds(std::span(&c, 1), std::span(&id, 1));
  ASSERT_EQ(m.size(), c.size());
  for (std::size_t i = 0; i < c.size(); i += 97) EXPECT_EQ(m.records[i].position, c.records[i].position);
  EXPECT_EQ(m.stations.size(), 1u);
  EXPECT_EQ(m.stations[0].pose.max_abs_difference(id), 0.0);
}

TEST(MergeClouds, TruePosesReconstructTheRoom) {
  const auto& ks = kitchen_scans(0.001, false);
  const std::vector<PointCloud> clouds = {ks.scans[0].cloud, ks.scans[1].cloud};
  const std::vector<RigidTransform> poses = {ks.kitchen.stations[0], ks.kitchen.stations[1]};
  const auto m = merge_clouds(clouds, poses);
  EXPECT_EQ(m.size(), clouds[0].size() + clouds[1].size());
  EXPECT_EQ(m.frame, CloudFrame::World);
  const KitchenParams p;
  const Bounds& b = m.bounds();
  EXPECT_LE((b.min - Vec3::Zero()).cwiseAbs().maxCoeff(), 0.003);
  EXPECT_LE((b.max - Vec3(p.length, p.width, p.height)).cwiseAbs().maxCoeff(), 0.003);
  ASSERT_EQ(m.stations.size(), 2u);
  EXPECT_NE(m.stations[0].id, m.stations[1].id);
  for (int s = 0; s < 2; ++s) {
    EXPECT_LE((m.station_origin_in_cloud(m.stations[s].id) - poses[s].translation()).norm(), 1e-12);
  }
}

TEST(MergeClouds, PoseCountMismatch) {
  const std::vector<PointCloud> clouds(2);
  const std::vector<RigidTransform> poses(1);
  EXPECT_THROW(merge_clouds(clouds, poses), InvalidArgument);
}
