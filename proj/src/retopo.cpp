#include "r2vr/retopo.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <queue>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/LU>

#include "r2vr/geometry.hpp"
#include "r2vr/geometry2d.hpp"
#include "r2vr/neighbor_index.hpp"

namespace r2vr {

namespace {

// ---------------------------------------------------------------- RANSAC

struct Candidate {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0;
  std::size_t support = 0;
};

std::size_t count_support(std::span<const Vec3> pts, std::span<const std::uint32_t> active, const Vec3& n, double d,
                          double eps) {
  std::size_t c = 0;
  for (auto i : active) c += std::abs(n.dot(pts[i]) - d) <= eps;
  return c;
}

Candidate make_candidate(std::span<const Vec3> pts, const std::vector<std::uint32_t>& active,
                         const NeighborIndex* local, const std::vector<Vec3>& active_pts, const RansacParams& prm,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = active.size();
  const std::size_t s0 = rng() % n;
  std::size_t s1 = 0, s2 = 0;
  if (local) {
    const auto nb = local->radius_search(active_pts[s0], prm.sample_radius);
    if (nb.size() < 3) return {};
    do s1 = nb[rng() % nb.size()]; while (s1 == s0);
    do s2 = nb[rng() % nb.size()]; while (s2 == s0 || s2 == s1);
  } else {
    if (n < 3) return {};
    do s1 = rng() % n; while (s1 == s0);
    do s2 = rng() % n; while (s2 == s0 || s2 == s1);
  }
  const Vec3& a = pts[active[s0]];
  const Vec3 nrm = (pts[active[s1]] - a).cross(pts[active[s2]] - a);
  const double len = nrm.norm();
  if (len < 1e-12) return {};
  Candidate c;
  c.normal = nrm / len;
  c.offset = c.normal.dot(a);
  c.support = count_support(pts, active, c.normal, c.offset, prm.epsilon);
  return c;
}

// Largest group of ids linked at `radius`; ties go to the group holding the
// smallest id.
std::vector<std::uint32_t> largest_cluster(std::span<const Vec3> pts, const std::vector<std::uint32_t>& ids,
                                           double radius) {
  std::vector<Vec3> sub;
  sub.reserve(ids.size());
  for (auto i : ids) sub.push_back(pts[i]);
  const NeighborIndex index(sub, radius);
  std::vector<std::uint32_t> parent(ids.size());
  std::iota(parent.begin(), parent.end(), 0u);
  const auto find = [&](std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::uint32_t i = 0; i < sub.size(); ++i) {
    for (auto j : index.radius_search(sub[i], radius)) {
      const auto a = find(i), b = find(j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<std::size_t> count(ids.size(), 0);
  for (std::uint32_t i = 0; i < sub.size(); ++i) ++count[find(i)];
  std::uint32_t best = 0;
  for (std::uint32_t r = 0; r < count.size(); ++r)
    if (count[r] > count[best]) best = r;
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < sub.size(); ++i)
    if (find(i) == best) out.push_back(ids[i]);
  return out;
}

// Mean nearest-neighbour distance over a stride sample of the ids.
double mean_spacing(std::span<const Vec3> pts, const std::vector<std::uint32_t>& ids) {
  std::vector<Vec3> sub;
  sub.reserve(ids.size());
  for (auto i : ids) sub.push_back(pts[i]);
  const NeighborIndex index(sub, NeighborIndex::suggest_cell_size(sub));
  const std::size_t step = std::max<std::size_t>(1, sub.size() / 500);
  double s = 0;
  std::size_t n = 0;
  std::vector<Neighbor> nb;
  for (std::size_t i = 0; i < sub.size(); i += step, ++n) {
    index.knn_into(sub[i], 1, static_cast<std::uint32_t>(i), nb);
    s += std::sqrt(nb.front().distance_sq);
  }
  return s / double(n);
}

std::vector<PlaneSegment> ransac_impl(std::span<const Vec3> pts, const RansacParams& prm, bool parallel) {
  if (!(prm.epsilon > 0)) throw InvalidArgument("ransac epsilon must be positive");
  if (prm.iterations == 0) throw InvalidArgument("ransac iterations must be positive");
  std::vector<PlaneSegment> out;
  std::vector<std::uint32_t> active(pts.size());
  std::iota(active.begin(), active.end(), 0u);
  const std::size_t min_support = std::max<std::size_t>(3, prm.min_inliers);
  const std::size_t max_rounds = 4 * prm.max_planes + 16;

  for (std::size_t round = 0; round < max_rounds && out.size() < prm.max_planes; ++round) {
    if (active.size() < min_support) break;
    std::vector<Vec3> active_pts;
    std::unique_ptr<NeighborIndex> local;
    if (prm.sample_radius > 0) {
      active_pts.reserve(active.size());
      for (auto i : active) active_pts.push_back(pts[i]);
      local = std::make_unique<NeighborIndex>(active_pts, prm.sample_radius / 2);
    }
    const std::uint64_t round_seed = mix_seed(prm.seed, round);
    std::vector<Candidate> cands(prm.iterations);
    const long iters = static_cast<long>(prm.iterations);
    if (parallel) {
#pragma omp parallel for schedule(dynamic, 4)
      for (long it = 0; it < iters; ++it)
        cands[it] = make_candidate(pts, active, local.get(), active_pts, prm, mix_seed(round_seed, it));
    } else {
      for (long it = 0; it < iters; ++it)
        cands[it] = make_candidate(pts, active, local.get(), active_pts, prm, mix_seed(round_seed, it));
    }
    std::size_t best = 0;
    for (std::size_t it = 1; it < cands.size(); ++it)
      if (cands[it].support > cands[best].support) best = it;
    const Candidate& c = cands[best];
    if (c.support < min_support) break;

    std::vector<std::uint32_t> inl;
    for (auto i : active)
      if (std::abs(c.normal.dot(pts[i]) - c.offset) <= prm.epsilon) inl.push_back(i);
    if (prm.cluster_radius != 0 && inl.size() >= 2) {
      const double r = prm.cluster_radius > 0 ? prm.cluster_radius : 4.0 * mean_spacing(pts, inl);
      if (r > 0) inl = largest_cluster(pts, inl, r);
    }

    // Refit, then keep only points within epsilon of the final plane.
    Vec3 n = c.normal;
    double d = c.offset;
    std::vector<std::uint32_t> kept = inl;
    for (int pass = 0; pass < 2 && kept.size() >= 3; ++pass) {
      const PlaneFit fit = fit_plane_pca(pts, kept);
      n = fit.normal.dot(c.normal) < 0 ? Vec3(-fit.normal) : fit.normal;
      d = n.dot(fit.centroid);
      std::vector<std::uint32_t> next;
      for (auto i : inl)
        if (std::abs(n.dot(pts[i]) - d) <= prm.epsilon) next.push_back(i);
      kept.swap(next);
    }
    // A final pass restricted to the fitted plane's own support.
    {
      std::vector<std::uint32_t> next;
      for (auto i : kept)
        if (std::abs(n.dot(pts[i]) - d) <= prm.epsilon) next.push_back(i);
      kept.swap(next);
    }

    const auto& consumed = kept.size() >= min_support ? kept : inl;
    std::vector<std::uint32_t> rest;
    rest.reserve(active.size() - consumed.size());
    std::set_difference(active.begin(), active.end(), consumed.begin(), consumed.end(), std::back_inserter(rest));
    active.swap(rest);
    if (kept.size() < min_support) continue;  // fragmented support, discard and move on

    PlaneSegment seg;
    seg.normal = n;
    seg.offset = d;
    seg.inlier_ids = std::move(kept);
    seg.label = "plane_" + std::to_string(out.size());
    out.push_back(std::move(seg));
  }
  return out;
}

// ---------------------------------------------------------------- QEM

using Quadric = Eigen::Matrix4d;

Quadric plane_quadric(const Vec3& n, double d, double w) {
  const Eigen::Vector4d p(n.x(), n.y(), n.z(), -d);
  return w * p * p.transpose();
}

double quadric_cost(const Quadric& q, const Vec3& x) {
  const Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
  return std::max(0.0, h.dot(q * h));
}

struct EdgeKey {
  std::uint64_t v;
  EdgeKey(std::uint32_t a, std::uint32_t b) : v((std::uint64_t(std::min(a, b)) << 32) | std::max(a, b)) {}
  bool operator==(const EdgeKey&) const = default;
};
struct EdgeHash {
  std::size_t operator()(const EdgeKey& k) const { return std::hash<std::uint64_t>()(k.v); }
};

struct Collapse {
  double cost;
  std::uint32_t a, b;
  std::uint32_t stamp_a, stamp_b;
  Vec3 pos;
  // min-heap on (cost, a, b)
  bool operator<(const Collapse& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (a != o.a) return a > o.a;
    return b > o.b;
  }
};

class Decimator {
 public:
  explicit Decimator(const TriangleMesh& m)
      : pos_(m.vertices), tris_(m.triangles), labels_(m.face_labels), face_alive_(m.triangles.size(), 1),
        vert_alive_(m.vertices.size(), 1), stamp_(m.vertices.size(), 0), vf_(m.vertices.size()),
        q_(m.vertices.size(), Quadric::Zero()) {
    std::unordered_map<EdgeKey, int, EdgeHash> edge_faces;
    for (std::uint32_t f = 0; f < tris_.size(); ++f) {
      for (int c = 0; c < 3; ++c) {
        vf_[tris_[f][c]].push_back(f);
        ++edge_faces[EdgeKey(tris_[f][c], tris_[f][(c + 1) % 3])];
      }
      const Vec3 nn = face_cross(f);
      const double area2 = nn.norm();
      if (area2 > 0) {
        const Vec3 n = nn / area2;
        const Quadric k = plane_quadric(n, n.dot(pos_[tris_[f][0]]), 0.5 * area2);
        for (int c = 0; c < 3; ++c) q_[tris_[f][c]] += k;
      }
    }
    // Boundary edges get a stiff perpendicular plane so the outline holds.
    for (std::uint32_t f = 0; f < tris_.size(); ++f) {
      const Vec3 nn = face_cross(f);
      if (nn.norm() == 0) continue;
      for (int c = 0; c < 3; ++c) {
        const std::uint32_t a = tris_[f][c], b = tris_[f][(c + 1) % 3];
        const int cnt = edge_faces[EdgeKey(a, b)];
        if (cnt == 1) {
          const Vec3 e = pos_[b] - pos_[a];
          const Vec3 bn = e.cross(nn).normalized();
          const Quadric k = plane_quadric(bn, bn.dot(pos_[a]), kBoundaryWeight * e.squaredNorm());
          q_[a] += k;
          q_[b] += k;
        }
      }
    }
    for (const auto& [k, cnt] : edge_faces) {
      if (cnt > 2) nonmanifold_.insert(k.v);
    }
    for (const auto& [k, cnt] : edge_faces) {
      (void)cnt;
      push(std::uint32_t(k.v >> 32), std::uint32_t(k.v & 0xffffffffu));
    }
    alive_faces_ = tris_.size();
  }

  std::size_t run(std::size_t target) {
    std::size_t collapses = 0;
    while (alive_faces_ > target && !heap_.empty()) {
      const Collapse c = heap_.top();
      heap_.pop();
      if (!vert_alive_[c.a] || !vert_alive_[c.b]) continue;
      if (stamp_[c.a] != c.stamp_a || stamp_[c.b] != c.stamp_b) continue;
      if (!legal(c.a, c.b, c.pos)) continue;
      apply(c.a, c.b, c.pos);
      ++collapses;
    }
    return collapses;
  }

  std::size_t nonmanifold_count() const { return nonmanifold_.size(); }

  TriangleMesh extract() const {
    TriangleMesh out;
    std::vector<std::uint32_t> remap(pos_.size(), std::numeric_limits<std::uint32_t>::max());
    for (std::uint32_t f = 0; f < tris_.size(); ++f) {
      if (!face_alive_[f]) continue;
      Triangle t;
      for (int c = 0; c < 3; ++c) {
        auto& r = remap[tris_[f][c]];
        if (r == std::numeric_limits<std::uint32_t>::max()) {
          r = static_cast<std::uint32_t>(out.vertices.size());
          out.vertices.push_back(pos_[tris_[f][c]]);
        }
        t[c] = r;
      }
      out.triangles.push_back(t);
      if (!labels_.empty()) out.face_labels.push_back(labels_[f]);
    }
    return out;
  }

 private:
  static constexpr double kBoundaryWeight = 1e3;

  Vec3 face_cross(std::uint32_t f) const {
    const auto& t = tris_[f];
    return (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
  }

  void neighbors(std::uint32_t v, std::vector<std::uint32_t>& out) const {
    out.clear();
    for (auto f : vf_[v]) {
      if (!face_alive_[f]) continue;
      for (auto w : tris_[f])
        if (w != v) out.push_back(w);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }

  void push(std::uint32_t a, std::uint32_t b) {
    if (nonmanifold_.count(EdgeKey(a, b).v)) return;
    const Quadric q = q_[a] + q_[b];
    const Vec3 mid = 0.5 * (pos_[a] + pos_[b]);
    Vec3 best = pos_[a];
    double cost = quadric_cost(q, pos_[a]);
    const auto consider = [&](const Vec3& x) {
      const double cx = quadric_cost(q, x);
      if (cx < cost) {
        cost = cx;
        best = x;
      }
    };
    consider(pos_[b]);
    consider(mid);
    const Eigen::Matrix3d A = q.topLeftCorner<3, 3>();
    Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    lu.setThreshold(1e-9);
    if (lu.rank() == 3) {
      const Vec3 x = lu.solve(Vec3(-q.topRightCorner<3, 1>()));
      if (x.allFinite() && (x - mid).norm() <= 2 * (pos_[a] - pos_[b]).norm()) consider(x);
    }
    heap_.push({cost, a, b, stamp_[a], stamp_[b], best});
  }

  bool legal(std::uint32_t a, std::uint32_t b, const Vec3& x) {
    std::vector<std::uint32_t> shared, na, nb;
    bool has_edge = false;
    for (auto f : vf_[a]) {
      if (!face_alive_[f]) continue;
      const auto& t = tris_[f];
      if (t[0] == b || t[1] == b || t[2] == b) {
        has_edge = true;
        for (auto w : t)
          if (w != a && w != b) shared.push_back(w);
      }
    }
    if (!has_edge || shared.size() > 2) return false;
    neighbors(a, na);
    neighbors(b, nb);
    std::vector<std::uint32_t> common;
    std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
    std::sort(shared.begin(), shared.end());
    if (common != shared) return false;
    // Two boundary vertices joined by an interior edge would pinch the mesh.
    if (shared.size() == 2 && is_boundary(a) && is_boundary(b)) return false;
    if (shared.size() == 1 && na.size() + nb.size() <= 4) return false;  // lone triangle

    for (const auto v : {a, b}) {
      for (auto f : vf_[v]) {
        if (!face_alive_[f]) continue;
        auto t = tris_[f];
        if ((t[0] == a || t[1] == a || t[2] == a) && (t[0] == b || t[1] == b || t[2] == b)) continue;
        const Vec3 n0 = face_cross(f);
        std::array<Vec3, 3> p{pos_[t[0]], pos_[t[1]], pos_[t[2]]};
        for (int c = 0; c < 3; ++c)
          if (t[c] == v) p[c] = x;
        const Vec3 n1 = (p[1] - p[0]).cross(p[2] - p[0]);
        if (0.5 * n1.norm() < 1e-12) return false;
        if (n0.normalized().dot(n1.normalized()) < 0.2) return false;
        // The surviving face must not duplicate one already around the other vertex.
        if (v == b) {
          for (int c = 0; c < 3; ++c)
            if (t[c] == b) t[c] = a;
          std::sort(t.begin(), t.end());
          for (auto g : vf_[a]) {
            if (!face_alive_[g]) continue;
            auto s = tris_[g];
            std::sort(s.begin(), s.end());
            if (s == t) return false;
          }
        }
      }
    }
    return true;
  }

  bool is_boundary(std::uint32_t v) const {
    std::unordered_map<std::uint32_t, int> count;
    for (auto f : vf_[v]) {
      if (!face_alive_[f]) continue;
      for (auto w : tris_[f])
        if (w != v) ++count[w];
    }
    for (const auto& [w, c] : count)
      if (c == 1) return true;
    return false;
  }

  void apply(std::uint32_t a, std::uint32_t b, const Vec3& x) {
    for (auto f : vf_[b]) {
      if (!face_alive_[f]) continue;
      auto& t = tris_[f];
      if (t[0] == a || t[1] == a || t[2] == a) {
        face_alive_[f] = 0;
        --alive_faces_;
        continue;
      }
      for (auto& w : t)
        if (w == b) w = a;
      vf_[a].push_back(f);
    }
    vf_[b].clear();
    vert_alive_[b] = 0;
    pos_[a] = x;
    q_[a] += q_[b];
    ++stamp_[a];
    std::erase_if(vf_[a], [&](std::uint32_t f) { return !face_alive_[f]; });
    std::vector<std::uint32_t> na;
    neighbors(a, na);
    for (auto w : na) push(a, w);
  }

  std::vector<Vec3> pos_;
  std::vector<Triangle> tris_;
  std::vector<std::string> labels_;
  std::vector<std::uint8_t> face_alive_, vert_alive_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::vector<std::uint32_t>> vf_;
  std::vector<Quadric> q_;
  std::unordered_set<std::uint64_t> nonmanifold_;
  std::priority_queue<Collapse> heap_;
  std::size_t alive_faces_ = 0;
};

// ---------------------------------------------------------------- deviation

struct TriBox {
  Vec3 lo, hi;
};

std::vector<std::size_t> stride_sample(std::size_t n, std::size_t cap) {
  std::vector<std::size_t> ids;
  if (n <= cap) {
    ids.resize(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  } else {
    ids.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i)
      ids.push_back(static_cast<std::size_t>((unsigned __int128)i * n / cap));
  }
  return ids;
}

double mesh_distance(const TriangleMesh& mesh, const std::vector<TriBox>& boxes, const Vec3& p) {
  double best2 = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 gap = (boxes[t].lo - p).cwiseMax(p - boxes[t].hi).cwiseMax(0.0);
    if (gap.squaredNorm() >= best2) continue;
    const Vec3 c = closest_point_on_triangle(p, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
    best2 = std::min(best2, (c - p).squaredNorm());
  }
  return std::sqrt(best2);
}

DeviationReport summarize(std::vector<double> d) {
  DeviationReport r;
  r.sample_count = d.size();
  std::sort(d.begin(), d.end());
  double s = 0;
  for (double x : d) s += x;
  r.mean_mm = 1000.0 * s / double(d.size());
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.95 * double(d.size())));
  r.p95_mm = 1000.0 * d[std::max<std::size_t>(rank, 1) - 1];
  r.max_mm = 1000.0 * d.back();
  return r;
}

std::vector<TriBox> tri_boxes(const TriangleMesh& mesh) {
  std::vector<TriBox> boxes(mesh.triangles.size());
  for (std::size_t t = 0; t < boxes.size(); ++t) {
    boxes[t].lo = mesh.corner(t, 0).cwiseMin(mesh.corner(t, 1)).cwiseMin(mesh.corner(t, 2));
    boxes[t].hi = mesh.corner(t, 0).cwiseMax(mesh.corner(t, 1)).cwiseMax(mesh.corner(t, 2));
  }
  return boxes;
}

void check_deviation_inputs(const TriangleMesh& mesh, std::span<const Vec3> points, std::size_t cap) {
  if (mesh.empty()) throw InvalidArgument("deviation needs a non-empty mesh");
  if (points.empty()) throw InvalidArgument("deviation needs a non-empty cloud");
  if (cap == 0) throw InvalidArgument("deviation sample_cap must be positive");
}

}  // namespace

std::vector<PlaneSegment> ransac_planes(std::span<const Vec3> points, const RansacParams& params) {
  return ransac_impl(points, params, true);
}

std::vector<PlaneSegment> ransac_planes_serial(std::span<const Vec3> points, const RansacParams& params) {
  return ransac_impl(points, params, false);
}

std::vector<PlaneSegment> snap_orthogonal(std::vector<PlaneSegment> segs, std::span<const Vec3> points,
                                          double tol_deg, ManhattanFrame* frame_out) {
  if (segs.empty()) throw InvalidArgument("snap_orthogonal needs at least one segment");
  const double tol = tol_deg * std::numbers::pi / 180.0;
  std::vector<std::size_t> order(segs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return segs[a].inlier_ids.size() > segs[b].inlier_ids.size(); });
  ManhattanFrame fr;
  fr.axes[0] = segs[order[0]].normal.normalized();
  bool found = false;
  for (std::size_t k = 1; k < order.size() && !found; ++k) {
    const Vec3& n = segs[order[k]].normal;
    if (std::abs(n.dot(fr.axes[0])) <= std::sin(tol)) {
      fr.axes[1] = (n - n.dot(fr.axes[0]) * fr.axes[0]).normalized();
      found = true;
    }
  }
  if (!found) fr.axes[1] = plane_basis(fr.axes[0]).first;
  fr.axes[2] = fr.axes[0].cross(fr.axes[1]);
  if (frame_out) *frame_out = fr;

  const double cos_tol = std::cos(tol);
  for (auto& s : segs) {
    for (const auto& axis : fr.axes) {
      const double c = s.normal.dot(axis);
      if (std::abs(c) < cos_tol) continue;
      s.normal = c < 0 ? Vec3(-axis) : axis;
      if (!s.inlier_ids.empty()) {
        double sum = 0;
        for (auto i : s.inlier_ids) sum += s.normal.dot(points[i]);
        s.offset = sum / double(s.inlier_ids.size());
      }
      s.has_rectangle = false;
      break;
    }
  }
  return segs;
}

std::vector<PlaneSegment> rectangles_from_segments(std::vector<PlaneSegment> segs, std::span<const Vec3> points) {
  for (auto& s : segs) {
    if (s.inlier_ids.size() < 3) {
      throw DegenerateConfiguration("segment '" + s.label + "' has fewer than 3 inliers");
    }
    const auto [u, v] = plane_basis(s.normal);
    std::vector<Vec2> proj;
    proj.reserve(s.inlier_ids.size());
    for (auto i : s.inlier_ids) proj.emplace_back(u.dot(points[i]), v.dot(points[i]));
    const auto hull = convex_hull(std::move(proj));
    if (hull.size() < 3) throw DegenerateConfiguration("segment '" + s.label + "' inliers are collinear");
    const Rectangle2 r = min_area_rectangle(hull);
    for (int c = 0; c < 4; ++c) s.rectangle[c] = r.corners[c].x() * u + r.corners[c].y() * v + s.offset * s.normal;
    s.has_rectangle = true;
  }
  return segs;
}

void classify_segments(std::vector<PlaneSegment>& segs, double tol_deg) {
  const double tol = tol_deg * std::numbers::pi / 180.0;
  std::optional<std::size_t> lo, hi;
  const auto height = [&](const PlaneSegment& s) { return s.offset / s.normal.z(); };
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (std::abs(segs[i].normal.z()) < std::cos(tol)) continue;
    if (!lo || height(segs[i]) < height(segs[*lo])) lo = i;
    if (!hi || height(segs[i]) > height(segs[*hi])) hi = i;
  }
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double nz = std::abs(segs[i].normal.z());
    const std::string k = std::to_string(i);
    if (lo && i == *lo && lo != hi) segs[i].label = "floor";
    else if (hi && i == *hi && lo != hi) segs[i].label = "ceiling";
    else if (nz >= std::cos(tol)) segs[i].label = "horizontal_" + k;
    else if (nz <= std::sin(tol)) segs[i].label = "wall_" + k;
    else segs[i].label = "plane_" + k;
  }
}

TriangleMesh build_shell(std::span<const PlaneSegment> segments, double weld_tol) {
  TriangleMesh m;
  const double tol2 = weld_tol * weld_tol;
  const auto weld = [&](const Vec3& p) {
    for (std::uint32_t i = 0; i < m.vertices.size(); ++i)
      if ((m.vertices[i] - p).squaredNorm() <= tol2) return i;
    m.vertices.push_back(p);
    return static_cast<std::uint32_t>(m.vertices.size() - 1);
  };
  for (const auto& s : segments) {
    if (!s.has_rectangle) continue;
    std::array<std::uint32_t, 4> id;
    for (int c = 0; c < 4; ++c) id[c] = weld(s.rectangle[c]);
    for (const Triangle t : {Triangle{id[0], id[1], id[2]}, Triangle{id[0], id[2], id[3]}}) {
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
      m.triangles.push_back(t);
      m.face_labels.push_back(s.label);
      if (m.triangle_area(m.triangles.size() - 1) <= 1e-12) {
        m.triangles.pop_back();
        m.face_labels.pop_back();
      }
    }
  }
  return m;
}

DecimationResult decimate_qem(const TriangleMesh& mesh, long target) {
  if (target <= 0) throw InvalidArgument("decimation target must be positive");
  DecimationResult res;
  if (static_cast<std::size_t>(target) >= mesh.triangle_count()) {
    res.mesh = mesh;
    return res;
  }
  Decimator d(mesh);
  res.collapses = d.run(static_cast<std::size_t>(target));
  res.nonmanifold_edges = d.nonmanifold_count();
  res.mesh = d.extract();
  return res;
}

DeviationReport deviation(const TriangleMesh& mesh, std::span<const Vec3> points, std::size_t cap) {
  check_deviation_inputs(mesh, points, cap);
  const auto ids = stride_sample(points.size(), cap);
  const auto boxes = tri_boxes(mesh);
  std::vector<double> d(ids.size());
  const long n = static_cast<long>(ids.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (long i = 0; i < n; ++i) d[i] = mesh_distance(mesh, boxes, points[ids[i]]);
  return summarize(std::move(d));
}

DeviationReport deviation_serial(const TriangleMesh& mesh, std::span<const Vec3> points, std::size_t cap) {
  check_deviation_inputs(mesh, points, cap);
  const auto ids = stride_sample(points.size(), cap);
  const auto boxes = tri_boxes(mesh);
  std::vector<double> d(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) d[i] = mesh_distance(mesh, boxes, points[ids[i]]);
  return summarize(std::move(d));
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0) || !std::isfinite(voxel)) throw InvalidArgument("voxel size must be positive");
  PointCloud out = cloud.clone_header();
  if (cloud.empty()) return out;
  const Vec3 lo = cloud.bounds().min;
  struct Acc {
    Vec3 p = Vec3::Zero();
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double intensity = 0;
    std::size_t n = 0;
    std::uint16_t station = 0;
  };
  std::vector<Acc> acc;
  std::unordered_map<std::uint64_t, std::uint32_t> slot;
  for (const auto& r : cloud.records) {
    const Vec3 f = ((r.position - lo) / voxel).array().floor();
    const std::uint64_t key = (std::uint64_t(f.x()) << 42) | (std::uint64_t(f.y()) << 21) | std::uint64_t(f.z());
    auto [it, fresh] = slot.try_emplace(key, static_cast<std::uint32_t>(acc.size()));
    if (fresh) {
      acc.emplace_back();
      acc.back().station = r.station_id;
    }
    Acc& a = acc[it->second];
    a.p += r.position;
    a.rgb += Eigen::Vector3d(r.color[0], r.color[1], r.color[2]);
    a.intensity += r.intensity;
    ++a.n;
  }
  out.records.reserve(acc.size());
  for (const auto& a : acc) {
    PointRecord r;
    const double inv = 1.0 / double(a.n);
    r.position = a.p * inv;
    for (int c = 0; c < 3; ++c) r.color[c] = static_cast<std::uint8_t>(std::lround(a.rgb[c] * inv));
    r.intensity = static_cast<float>(a.intensity * inv);
    r.station_id = a.station;
    out.records.push_back(r);
  }
  return out;
}

}  // namespace r2vr
