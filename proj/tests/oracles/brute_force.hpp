#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "r2vr/geometry.hpp"
#include "r2vr/neighbor_index.hpp"

namespace r2vr::oracle {

// All-pairs reference: sort every other point by (squared distance, index).
inline std::vector<Neighbor> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k,
                                       std::optional<std::uint32_t> exclude) {
  std::vector<Neighbor> all;
  for (std::uint32_t j = 0; j < pts.size(); ++j) {
    if (exclude && *exclude == j) continue;
    all.push_back({j, (pts[j] - q).squaredNorm()});
  }
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

// O(n^2) statistical outlier removal: population std, strict threshold.
inline std::vector<std::uint32_t> brute_stray(const std::vector<Vec3>& pts, std::size_t k, double alpha) {
  std::vector<double> means(pts.size());
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    double s = 0;
    for (const auto& nb : brute_knn(pts, pts[i], k, i)) s += std::sqrt(nb.distance_sq);
    means[i] = s / double(k);
  }
  double mean = 0;
  for (double m : means) mean += m;
  mean /= double(pts.size());
  double var = 0;
  for (double m : means) var += (m - mean) * (m - mean);
  const double thr = mean + alpha * std::sqrt(var / double(pts.size()));
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < pts.size(); ++i)
    if (means[i] > thr) out.push_back(i);
  return out;
}

}  // namespace r2vr::oracle
