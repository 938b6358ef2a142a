#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2vr/common.hpp"
#include "r2vr/rigid_transform.hpp"

namespace r2vr {

using Rgb = std::array<std::uint8_t, 3>;

struct PointRecord {
  Vec3 position = Vec3::Zero();
  Rgb color{0, 0, 0};
  float intensity = 0.0f;
  std::uint16_t station_id = 0;
};

struct ScanStation {
  std::uint16_t id = 0;
  std::string name;
  RigidTransform pose;  // station-local -> world

  Vec3 origin() const { return pose.translation(); }
};

// Local: a single scan whose positions are still in the scanner frame; the
// station pose is metadata (e.g. a georeference) that has not been applied.
// World: positions already mapped by the station poses (merged clouds).
enum class CloudFrame : std::uint8_t { Local, World };

struct Bounds {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }
  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool operator==(const Bounds&) const = default;
};

class PointCloud {
 public:
  std::vector<PointRecord> records;
  std::vector<ScanStation> stations;
  bool has_color = false;
  bool has_intensity = false;
  CloudFrame frame = CloudFrame::Local;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  // Exact axis-aligned bounds over every record; cached until invalidate().
  const Bounds& bounds() const;
  void invalidate_bounds() { bounds_.reset(); }

  const ScanStation* find_station(std::uint16_t id) const;

  // Origin of a station expressed in this cloud's position frame.
  Vec3 station_origin_in_cloud(std::uint16_t id) const;

  // Empty copy carrying stations and attribute flags.
  PointCloud clone_header() const;

  // Throws InvalidArgument on non-finite positions, bad intensity, or a
  // station_id with no ScanStation.
  void validate() const;

 private:
  mutable std::optional<Bounds> bounds_;
};

Bounds compute_bounds(std::span<const PointRecord> records);

struct CloudStats {
  std::size_t count = 0;
  Bounds bounds;
  // Mean nearest-neighbour distance over a deterministic stride sample;
  // nullopt when fewer than two points exist.
  std::optional<double> mean_spacing;
  std::size_t spacing_sample_size = 0;
};

CloudStats cloud_stats(const PointCloud& cloud, std::size_t min_sample = 1000);

// Rec. 709 luma in [0,1] from color, else intensity.
double luminance(const PointCloud& cloud, const PointRecord& r);

}  // namespace r2vr
