#include "r2vr/registration.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include "r2vr/geometry.hpp"
#include "r2vr/geometry2d.hpp"
#include "r2vr/neighbor_index.hpp"

namespace r2vr {

namespace {

struct DisjointSets {
  std::vector<std::uint32_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// Area of the square [-h,h]^2 clipped to the disk of radius r.
double square_disk_area(double h, double r) {
  if (r >= h * std::sqrt(2.0)) return 4 * h * h;
  if (r <= h) return M_PI * r * r;
  const double x0 = std::sqrt(r * r - h * h);
  auto F = [r](double x) { return 0.5 * (x * std::sqrt(std::max(0.0, r * r - x * x)) + r * r * std::asin(x / r)); };
  return 4 * (h * x0 + F(h) - F(x0));
}

struct Line2 {
  Vec2 point, dir;
  double distance(const Vec2& p) const {
    const Vec2 d = p - point;
    return std::abs(d.x() * dir.y() - d.y() * dir.x());
  }
};

std::optional<Line2> fit_line(const std::vector<Vec2>& pts) {
  if (pts.size() < 4) return std::nullopt;
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= double(pts.size());
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) c += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(c);
  return Line2{mean, es.eigenvectors().col(1).normalized()};
}

std::optional<Vec2> intersect(const Line2& a, const Line2& b) {
  Eigen::Matrix2d m;
  m.col(0) = a.dir;
  m.col(1) = -b.dir;
  if (std::abs(m.determinant()) < 0.5) return std::nullopt;  // not near-perpendicular
  const Vec2 ts = m.fullPivLu().solve(b.point - a.point);
  return a.point + ts.x() * a.dir;
}

// Sub-sample crossing point of a 2x2 checker from its 0.5-luminance edge
// samples. Points are 2D in the target plane relative to a coarse centre.
std::optional<Vec2> refine_crossing(const std::vector<Vec2>& pts, const std::vector<double>& lum, double half_edge) {
  const std::size_t n = pts.size();
  if (n < 8) return std::nullopt;
  std::vector<Vec3> embedded(n);
  for (std::size_t i = 0; i < n; ++i) embedded[i] = Vec3(pts[i].x(), pts[i].y(), 0.0);
  const NeighborIndex index(embedded, NeighborIndex::suggest_cell_size(embedded));
  const double window = 0.75 * half_edge;
  std::vector<Vec2> crossings;
  std::vector<Neighbor> nb;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (pts[i].norm() > window) continue;
    const double di = lum[i] - 0.5;
    index.knn_into(embedded[i], std::min<std::size_t>(8, n - 1), i, nb);
    for (const auto& e : nb) {
      const double dj = lum[e.index] - 0.5;
      if (di * dj >= 0) continue;
      if (std::abs(di) > std::abs(dj) || (std::abs(di) == std::abs(dj) && e.index < i)) continue;
      crossings.push_back(pts[i] + std::abs(di) * (pts[e.index] - pts[i]));
    }
  }
  if (crossings.size() < 8) return std::nullopt;

  // Edge orientation modulo 90 degrees.
  double s4 = 0, c4 = 0;
  for (const auto& q : crossings) {
    const double r = q.norm();
    if (r < 0.15 * half_edge) continue;
    const double phi = std::atan2(q.y(), q.x());
    s4 += r * std::sin(4 * phi);
    c4 += r * std::cos(4 * phi);
  }
  const double theta = 0.25 * std::atan2(s4, c4);
  Line2 l1{Vec2::Zero(), Vec2(std::cos(theta), std::sin(theta))};
  Line2 l2{Vec2::Zero(), Vec2(-std::sin(theta), std::cos(theta))};
  double gate = 0.25 * half_edge;
  std::optional<Vec2> center;
  for (int iter = 0; iter < 4; ++iter) {
    std::vector<Vec2> g1, g2;
    double ss = 0;
    for (const auto& q : crossings) {
      const double d1 = l1.distance(q), d2 = l2.distance(q);
      const double d = std::min(d1, d2);
      if (d > gate) continue;
      (d1 <= d2 ? g1 : g2).push_back(q);
      ss += d * d;
    }
    const auto f1 = fit_line(g1), f2 = fit_line(g2);
    if (!f1 || !f2) return center;
    const auto c = intersect(*f1, *f2);
    if (!c) return center;
    center = c;
    l1 = *f1;
    l2 = *f2;
    const double rms = std::sqrt(ss / double(g1.size() + g2.size()));
    gate = std::max(3.0 * rms, 0.002);
  }
  return center;
}

struct Candidate {
  CheckerTarget target;
  std::uint32_t order = 0;
};

std::optional<CheckerTarget> evaluate_patch(const PointCloud& cloud, const NeighborIndex& index,
                                            const std::vector<double>& lum, Vec3 center,
                                            const DetectionParams& p) {
  CheckerTarget t;
  for (int pass = 0; pass < 2; ++pass) {
    const auto patch = index.radius_search(center, p.patch_radius);
    if (patch.size() < p.min_points) return std::nullopt;
    std::vector<Vec3> patch_pts;
    patch_pts.reserve(patch.size());
    for (auto i : patch) patch_pts.push_back(cloud.records[i].position);
    const PlaneFit pf = fit_plane_pca(patch_pts);
    if (!(pf.eigenvalues[1] > 0) || pf.eigenvalues[0] / pf.eigenvalues[1] > p.planarity_max) return std::nullopt;

    std::vector<std::uint32_t> support;
    double dark_sum = 0, bright_sum = 0;
    std::size_t dark = 0, bright = 0;
    for (auto i : patch) {
      if (lum[i] <= p.dark_max) {
        ++dark;
        dark_sum += lum[i];
        support.push_back(i);
      } else if (lum[i] >= p.bright_min) {
        ++bright;
        bright_sum += lum[i];
        support.push_back(i);
      }
    }
    const std::size_t min_mode = std::max<std::size_t>(3, p.min_points / 4);
    if (dark < min_mode || bright < min_mode || support.size() < p.min_points) return std::nullopt;
    if (bright_sum / double(bright) - dark_sum / double(dark) < p.contrast_min) return std::nullopt;

    std::vector<Vec3> sp;
    sp.reserve(support.size());
    for (auto i : support) sp.push_back(cloud.records[i].position);
    const PlaneFit plane = fit_plane_pca(sp);
    const Vec3 station = cloud.station_origin_in_cloud(cloud.records[support.front()].station_id);
    Vec3 n = plane.normal;
    if (n.dot(station - plane.centroid) < 0) n = -n;
    const Vec3 e1 = plane.eigenvectors.col(2), e2 = n.cross(e1);

    // Refine over every patch sample so edge-straddling samples contribute.
    std::vector<Vec2> local;
    std::vector<double> l;
    local.reserve(patch.size());
    for (auto i : patch) {
      const Vec3 d = cloud.records[i].position - plane.centroid;
      local.emplace_back(d.dot(e1), d.dot(e2));
      l.push_back(lum[i]);
    }
    const auto refined = refine_crossing(local, l, 0.5 * p.target_edge);
    const Vec3 c = refined ? Vec3(plane.centroid + refined->x() * e1 + refined->y() * e2) : plane.centroid;

    std::vector<Vec2> hull_pts;
    hull_pts.reserve(support.size());
    for (const auto& q : sp) hull_pts.emplace_back((q - c).dot(e1), (q - c).dot(e2));
    const double hull_area = std::abs(polygon_area(convex_hull(hull_pts)));
    const double expected = square_disk_area(0.5 * p.target_edge, p.patch_radius);
    const double cos_inc = std::abs(n.dot((station - c).normalized()));

    t.centroid = c;
    t.normal = n;
    t.support_count = support.size();
    t.confidence = std::clamp(cos_inc * std::min(1.0, hull_area / expected), 0.0, 1.0);
    center = c;
  }
  return t;
}

}  // namespace

std::vector<CheckerTarget> detect_targets(const PointCloud& cloud, const DetectionParams& p) {
  if (!cloud.has_color && !cloud.has_intensity) {
    throw InvalidArgument("detect_targets: cloud has neither colour nor intensity");
  }
  if (!(p.patch_radius > 0 && p.link_radius > 0 && p.target_edge > 0 && p.planarity_max > 0)) {
    throw InvalidArgument("detect_targets: radii, edge and planarity_max must be positive");
  }
  const std::size_t n = cloud.size();
  std::vector<double> lum(n);
  std::vector<std::uint32_t> dark;
  for (std::size_t i = 0; i < n; ++i) {
    lum[i] = luminance(cloud, cloud.records[i]);
    if (lum[i] <= p.dark_max) dark.push_back(static_cast<std::uint32_t>(i));
  }
  const std::size_t min_cluster = std::max<std::size_t>(3, p.min_points / 4);
  if (dark.size() < min_cluster) return {};

  std::vector<Vec3> dark_pts;
  dark_pts.reserve(dark.size());
  for (auto i : dark) dark_pts.push_back(cloud.records[i].position);
  const NeighborIndex dark_index(dark_pts, p.link_radius);
  DisjointSets sets(dark.size());
  for (std::uint32_t i = 0; i < dark.size(); ++i)
    for (auto j : dark_index.radius_search(dark_pts[i], p.link_radius))
      if (j > i) sets.unite(i, j);
  std::map<std::uint32_t, std::pair<Vec3, std::size_t>> clusters;  // root -> (sum, count)
  for (std::uint32_t i = 0; i < dark.size(); ++i) {
    auto& c = clusters.try_emplace(sets.find(i), Vec3::Zero(), 0).first->second;
    c.first += dark_pts[i];
    ++c.second;
  }

  std::vector<Vec3> seeds;
  for (const auto& [root, c] : clusters)
    if (c.second >= min_cluster) seeds.push_back(c.first / double(c.second));
  if (seeds.empty()) return {};

  const NeighborIndex index(cloud, 0.5 * p.patch_radius);
  std::vector<Candidate> found;
  for (std::uint32_t s = 0; s < seeds.size(); ++s) {
    if (auto t = evaluate_patch(cloud, index, lum, seeds[s], p)) found.push_back({*t, s});
  }

  // One detection per physical target: keep the best-supported within edge/2.
  std::vector<std::size_t> by_support(found.size());
  std::iota(by_support.begin(), by_support.end(), 0);
  std::stable_sort(by_support.begin(), by_support.end(), [&](std::size_t a, std::size_t b) {
    return found[a].target.support_count > found[b].target.support_count;
  });
  std::vector<bool> keep(found.size(), false);
  for (std::size_t k = 0; k < by_support.size(); ++k) {
    const auto& c = found[by_support[k]].target.centroid;
    bool dup = false;
    for (std::size_t j = 0; j < k && !dup; ++j)
      dup = keep[by_support[j]] && (found[by_support[j]].target.centroid - c).norm() < 0.5 * p.target_edge;
    keep[by_support[k]] = !dup;
  }
  std::vector<CheckerTarget> out;
  for (std::size_t k = 0; k < found.size(); ++k)
    if (keep[k]) out.push_back(found[k].target);
  return out;
}

RigidTransform estimate_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("estimate_rigid: point lists differ in length");
  if (src.size() < 3) throw DegenerateConfiguration("estimate_rigid needs at least 3 pairs");
  const double n = double(src.size());
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;
  Mat3 h = Mat3::Zero(), ss = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs, b = dst[i] - cd;
    h += a * b.transpose();
    ss += a * a.transpose();
  }
  // Rank check on the source scatter: collinear sets leave a free rotation.
  const Eigen::SelfAdjointEigenSolver<Mat3> es(ss);
  const double top = es.eigenvalues()[2];
  if (!(top > 0) || es.eigenvalues()[1] <= 1e-12 * top) {
    throw DegenerateConfiguration("estimate_rigid: source points are collinear or coincident");
  }
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0) d(2, 2) = -1;
  const Mat3 r = v * d * u.transpose();
  return RigidTransform(r, cd - r * cs);
}

RegistrationReport registration_report(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("registration_report: point lists differ in length");
  if (src.empty()) throw InvalidArgument("registration_report needs at least one pair");
  RegistrationReport rep;
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double r = (t.apply(src[i]) - dst[i]).norm() * 1000.0;
    rep.per_target_residuals_mm.push_back(r);
    sum += r;
    sum_sq += r * r;
  }
  const double n = double(src.size());
  rep.used_targets = src.size();
  rep.mean_point_error_mm = sum / n;
  rep.rms_mm = std::sqrt(sum_sq / n);
  return rep;
}

namespace {

struct Hypothesis {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double residual_sum = 0;
};

// Greedy nearest pairing of T(a) against b within tol, cheapest first.
Hypothesis extend(const std::vector<Vec3>& a, const std::vector<Vec3>& b, const RigidTransform& t, double tol) {
  struct Edge {
    double d;
    std::size_t i, j;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 ta = t.apply(a[i]);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = (ta - b[j]).norm();
      if (d <= tol) edges.push_back({d, i, j});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return x.d < y.d || (x.d == y.d && (x.i < y.i || (x.i == y.i && x.j < y.j)));
  });
  std::vector<bool> ua(a.size()), ub(b.size());
  Hypothesis h;
  for (const auto& e : edges) {
    if (ua[e.i] || ub[e.j]) continue;
    ua[e.i] = ub[e.j] = true;
    h.pairs.emplace_back(e.i, e.j);
    h.residual_sum += e.d;
  }
  std::sort(h.pairs.begin(), h.pairs.end());
  return h;
}

std::optional<RigidTransform> fit_pairs(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<Vec3> pa, pb;
  for (auto [i, j] : pairs) {
    pa.push_back(a[i]);
    pb.push_back(b[j]);
  }
  try {
    return estimate_rigid(pa, pb);
  } catch (const DegenerateConfiguration&) {
    return std::nullopt;
  }
}

bool better(const Hypothesis& x, const Hypothesis& y) {
  if (x.pairs.size() != y.pairs.size()) return x.pairs.size() > y.pairs.size();
  return x.residual_sum < y.residual_sum - 1e-12;
}

std::vector<std::size_t> canonical_order(std::span<const CheckerTarget> t) {
  std::vector<std::size_t> o(t.size());
  std::iota(o.begin(), o.end(), 0);
  std::stable_sort(o.begin(), o.end(), [&](std::size_t x, std::size_t y) {
    const Vec3 &p = t[x].centroid, &q = t[y].centroid;
    return std::lexicographical_compare(p.data(), p.data() + 3, q.data(), q.data() + 3);
  });
  return o;
}

}  // namespace

std::vector<Correspondence> match_targets(std::span<const CheckerTarget> ta, std::span<const CheckerTarget> tb,
                                          const MatchParams& params) {
  if (ta.size() < 3 || tb.size() < 3) throw MatchFailure("match_targets needs at least 3 targets per list");
  if (!(params.tolerance > 0)) throw InvalidArgument("match_targets: tolerance must be positive");
  const auto oa = canonical_order(ta), ob = canonical_order(tb);
  std::vector<Vec3> a, b;
  for (auto i : oa) a.push_back(ta[i].centroid);
  for (auto j : ob) b.push_back(tb[j].centroid);
  const std::size_t na = a.size(), nb = b.size();
  const double tol = params.tolerance;

  std::vector<std::array<std::size_t, 3>> triples;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = i + 1; j < na; ++j)
      for (std::size_t k = j + 1; k < na; ++k) {
        if (0.5 * (a[j] - a[i]).cross(a[k] - a[i]).norm() >= params.min_triangle_area) triples.push_back({i, j, k});
      }
  if (triples.size() > params.max_triples) {
    std::mt19937_64 rng(params.seed);
    std::shuffle(triples.begin(), triples.end(), rng);
    triples.resize(params.max_triples);
    std::sort(triples.begin(), triples.end());
  }

  auto dist = [](const std::vector<Vec3>& p, std::size_t i, std::size_t j) { return (p[i] - p[j]).norm(); };
  Hypothesis best;
  for (const auto& [i, j, k] : triples) {
    const double dij = dist(a, i, j), djk = dist(a, j, k), dik = dist(a, i, k);
    for (std::size_t p = 0; p < nb; ++p)
      for (std::size_t q = 0; q < nb; ++q) {
        if (q == p || std::abs(dist(b, p, q) - dij) > tol) continue;
        for (std::size_t r = 0; r < nb; ++r) {
          if (r == p || r == q) continue;
          if (std::abs(dist(b, q, r) - djk) > tol || std::abs(dist(b, p, r) - dik) > tol) continue;
          auto t = fit_pairs(a, b, {{i, p}, {j, q}, {k, r}});
          if (!t) continue;
          Hypothesis h = extend(a, b, *t, tol);
          // One refit over the extended set, then re-pair.
          if (h.pairs.size() >= 3) {
            if (auto t2 = fit_pairs(a, b, h.pairs)) {
              Hypothesis h2 = extend(a, b, *t2, tol);
              if (h2.pairs.size() >= h.pairs.size()) h = std::move(h2);
            }
          }
          if (better(h, best)) best = std::move(h);
        }
      }
  }
  if (best.pairs.size() < 3) {
    throw MatchFailure("match_targets: fewer than 3 mutually consistent target pairs (found " +
                       std::to_string(best.pairs.size()) + ")");
  }
  const auto t = fit_pairs(a, b, best.pairs);
  if (!t) throw MatchFailure("match_targets: consistent pairs are collinear");
  std::vector<Correspondence> out;
  for (auto [i, j] : best.pairs) out.push_back({oa[i], ob[j], (t->apply(a[i]) - b[j]).norm()});
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.index_a < y.index_a; });
  return out;
}

PairRegistration register_pair(const PointCloud& ca, const PointCloud& cb, const RegistrationParams& params) {
  PairRegistration res;
  res.targets_a = detect_targets(ca, params.detection);
  res.targets_b = detect_targets(cb, params.detection);
  // Correspondences are reported a-to-b; the fit below maps b onto a.
  res.correspondences = match_targets(res.targets_a, res.targets_b, params.matching);
  std::vector<Vec3> pa, pb;
  for (const auto& c : res.correspondences) {
    pa.push_back(res.targets_a[c.index_a].centroid);
    pb.push_back(res.targets_b[c.index_b].centroid);
  }
  res.b_to_a = estimate_rigid(pb, pa);
  res.report = registration_report(res.b_to_a, pb, pa);
  for (std::size_t k = 0; k < res.correspondences.size(); ++k) {
    res.correspondences[k].residual = res.report.per_target_residuals_mm[k] / 1000.0;
  }
  return res;
}

PointCloud merge_clouds(std::span<const PointCloud> clouds, std::span<const RigidTransform> poses) {
  if (clouds.size() != poses.size()) {
    throw InvalidArgument("merge_clouds: " + std::to_string(clouds.size()) + " clouds but " +
                          std::to_string(poses.size()) + " poses");
  }
  PointCloud out;
  out.frame = CloudFrame::World;
  out.has_color = !clouds.empty();
  out.has_intensity = !clouds.empty();
  std::size_t total = 0;
  for (const auto& c : clouds) {
    out.has_color = out.has_color && c.has_color;
    out.has_intensity = out.has_intensity && c.has_intensity;
    total += c.size();
  }
  out.records.reserve(total);
  std::vector<bool> used(1u << 16, false);
  for (std::size_t k = 0; k < clouds.size(); ++k) {
    const PointCloud& c = clouds[k];
    const RigidTransform& pose = poses[k];
    std::map<std::uint16_t, std::uint16_t> remap;
    for (const auto& s : c.stations) {
      std::uint16_t id = s.id;
      while (used[id]) ++id;
      used[id] = true;
      remap[s.id] = id;
      ScanStation ns = s;
      ns.id = id;
      ns.pose = c.frame == CloudFrame::Local ? pose : pose * s.pose;
      out.stations.push_back(std::move(ns));
    }
    for (const auto& r : c.records) {
      PointRecord nr = r;
      nr.position = pose.apply(r.position);
      const auto it = remap.find(r.station_id);
      if (it == remap.end()) throw InvalidArgument("merge_clouds: point references an unknown station");
      nr.station_id = it->second;
      out.records.push_back(nr);
    }
  }
  return out;
}

}  // namespace r2vr
