#pragma once

#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "r2vr/pointcloud.hpp"

namespace r2vr {

/// Subset of ASTM E2807 (E57) the toolkit reads and writes: cartesian
/// coordinates (scaled integer or float), 8-bit colour and scaled intensity
/// in bit-packed compressed vectors, one data3D entry per scan.
namespace e57 {

inline constexpr std::size_t kPageSize = 1024;
inline constexpr std::size_t kPagePayload = 1020;
inline constexpr double kCoordinateScale = 1e-4;  // 0.1 mm
inline constexpr double kIntensityScale = 1.0 / 65535.0;

enum class FieldEncoding { ScaledInteger, Integer, Float32, Float64 };

struct FieldDescriptor {
  std::string name;
  FieldEncoding encoding = FieldEncoding::ScaledInteger;
  std::int64_t minimum = 0;
  std::int64_t maximum = 0;
  double scale = 1.0;
  double offset = 0.0;

  // Bits per record in the packed bytestream.
  unsigned bit_width() const;
};

struct Data3DEntry {
  std::string name;
  std::string guid;
  std::uint64_t record_count = 0;
  std::uint64_t section_offset = 0;  // physical
  RigidTransform pose;
  bool has_pose = false;
  std::vector<FieldDescriptor> fields;
};

// CRC-32C (Castagnoli), as used for E57 page checksums.
std::uint32_t crc32c(std::span<const std::uint8_t> bytes);

std::uint64_t logical_to_physical(std::uint64_t logical);
std::uint64_t physical_to_logical(std::uint64_t physical);

}  // namespace e57

struct E57Document {
  std::uint64_t page_count = 0;
  boost::property_tree::ptree xml_root;
  std::vector<e57::Data3DEntry> data3d_entries;
};

struct E57ReadResult {
  std::vector<PointCloud> clouds;
  E57Document document;
};

E57ReadResult read_e57(const std::filesystem::path& path);

// Each cloud becomes one data3D entry; its first station's pose is written
// as the entry pose. Points are validated before any byte is written.
void write_e57(std::span<const PointCloud> clouds, const std::filesystem::path& path);

}  // namespace r2vr
