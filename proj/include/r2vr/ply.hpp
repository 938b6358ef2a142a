#pragma once

#include <filesystem>

#include "r2vr/mesh.hpp"
#include "r2vr/pointcloud.hpp"

namespace r2vr {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const PointCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

TriangleMesh read_mesh_ply(const std::filesystem::path& path);
void write_mesh_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
                    PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

}  // namespace r2vr
