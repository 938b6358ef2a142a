#include "r2vr/pointcloud.hpp"

#include <cmath>

#include "r2vr/neighbor_index.hpp"

namespace r2vr {

Bounds compute_bounds(std::span<const PointRecord> records) {
  Bounds b;
  for (const auto& r : records) b.expand(r.position);
  return b;
}

const Bounds& PointCloud::bounds() const {
  if (!bounds_) bounds_ = compute_bounds(records);
  return *bounds_;
}

const ScanStation* PointCloud::find_station(std::uint16_t id) const {
  for (const auto& s : stations)
    if (s.id == id) return &s;
  return nullptr;
}

Vec3 PointCloud::station_origin_in_cloud(std::uint16_t id) const {
  const ScanStation* s = find_station(id);
  if (!s) throw InvalidArgument("unknown station id " + std::to_string(id));
  return frame == CloudFrame::World ? s->origin() : Vec3::Zero();
}

PointCloud PointCloud::clone_header() const {
  PointCloud out;
  out.stations = stations;
  out.has_color = has_color;
  out.has_intensity = has_intensity;
  out.frame = frame;
  return out;
}

void PointCloud::validate() const {
  for (const auto& s : stations) {
    if (!s.pose.is_proper(1e-9)) throw InvalidArgument("station " + s.name + " pose is not a proper rotation");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.position.allFinite()) throw InvalidArgument("point " + std::to_string(i) + " has a non-finite position");
    if (has_intensity && !(r.intensity >= 0.0f && r.intensity <= 1.0f)) {
      throw InvalidArgument("point " + std::to_string(i) + " intensity outside [0,1]");
    }
    if (!find_station(r.station_id)) {
      throw InvalidArgument("point " + std::to_string(i) + " references unknown station " +
                            std::to_string(r.station_id));
    }
  }
}

double luminance(const PointCloud& cloud, const PointRecord& r) {
  if (cloud.has_color) {
    return (0.2126 * r.color[0] + 0.7152 * r.color[1] + 0.0722 * r.color[2]) / 255.0;
  }
  return r.intensity;
}

CloudStats cloud_stats(const PointCloud& cloud, std::size_t min_sample) {
  CloudStats s;
  s.count = cloud.size();
  s.bounds = cloud.bounds();
  if (cloud.size() < 2) return s;

  const auto pts = positions_of(cloud);
  const NeighborIndex index(pts, NeighborIndex::suggest_cell_size(pts));
  const std::size_t n = pts.size();
  const std::size_t sample = std::min(n, std::max<std::size_t>(min_sample, 1));
  std::vector<Neighbor> nn;
  double sum = 0.0;
  for (std::size_t j = 0; j < sample; ++j) {
    const auto i = static_cast<std::uint32_t>(j * n / sample);
    index.knn_into(pts[i], 1, i, nn);
    sum += std::sqrt(nn.front().distance_sq);
  }
  s.spacing_sample_size = sample;
  s.mean_spacing = sum / double(sample);
  return s;
}

}  // namespace r2vr
