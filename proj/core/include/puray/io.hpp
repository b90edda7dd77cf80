#pragma once

#include <filesystem>

#include "puray/geometry.hpp"
#include "puray/metrics.hpp"

namespace puray::io {

// One "x y z" triple per line; blank lines ignored. Parse errors carry the
// file path and 1-based line number.
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

// ascii 1.0 and binary_little_endian 1.0; the vertex element needs x/y/z
// scalar properties, everything else is skipped. Big-endian files are
// rejected.
PointCloud read_ply(const std::filesystem::path& path);
// binary writes float64 coordinates and round-trips bit-exactly.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary = true);

// Faces with more than three vertices are fan-triangulated.
TriangleMesh read_off(const std::filesystem::path& path);

// Dispatch on extension: .xyz or .ply.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace puray::io
