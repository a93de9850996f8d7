#pragma once

#include "scenediff/geometry.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/refinement.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace scenediff::io {

/// Little-endian float32 (x, y, z, intensity) records; intensity is dropped.
PointCloud read_kitti_bin(const std::filesystem::path& path);
/// Writes intensity 0.
void write_kitti_bin(const std::filesystem::path& path, const PointCloud& cloud);

/// One little-endian u32 per point; the class is the low 16 bits.
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& raw);

/// 12 reals per line, row-major [R | t]. Blank lines are skipped.
std::vector<RigidPose> read_poses(const std::filesystem::path& path);
std::vector<RigidPose> parse_poses(const std::string& text);

/// binary_little_endian, element vertex with float x, y, z.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
/// Accepts ascii and binary_little_endian with any extra vertex properties.
PointCloud read_ply(const std::filesystem::path& path);

/// Dispatches on the extension: .ply or .bin.
PointCloud read_cloud(const std::filesystem::path& path);

void save_model(const std::filesystem::path& path, const ToyNoisePredictor& model);
ToyNoisePredictor load_model(const std::filesystem::path& path);

void save_refine_model(const std::filesystem::path& path, const RefineNet& net);
RefineNet load_refine_model(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace scenediff::io
