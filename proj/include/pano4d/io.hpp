#pragma once

#include "pano4d/camera.hpp"
#include "pano4d/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pano4d::io {

namespace fs = std::filesystem;

// Raw float grid: little-endian header {"ERPF", u32 H, u32 W, u32 C, u32 T}
// followed by T*H*W*C float32 values, row-major, frame-major.
void write_raw_grid(const fs::path& path, const std::vector<Image>& frames);
std::vector<Image> read_raw_grid(const fs::path& path);

/// Writes an 8-bit gray or RGB PNG; values are clamped to [0, 1].
void write_png(const fs::path& path, const Image& image);
/// Reads an 8-bit PNG as gray or RGB in [0, 1] (alpha is dropped).
Image read_png(const fs::path& path);

/// Loads ERP frames from either a raw float grid or a PNG.
std::vector<Image> read_frames(const fs::path& path);

// Camera sidecar: JSON array of {azimuth_deg, elevation_deg, fov_deg, h, w}.
void write_cameras(const fs::path& path, const std::vector<PerspectiveCamera>& cams);
std::vector<PerspectiveCamera> read_cameras(const fs::path& path);

// Pose file: JSON array of {R: 9 floats row-major, t: 3 floats, fov_deg, h, w}.
// R maps camera coordinates (x right, y down, z forward) to world; t is the
// camera center in world coordinates.
void write_poses(const fs::path& path, const std::vector<SceneCamera>& poses);
std::vector<SceneCamera> read_poses(const fs::path& path);

/// Whole-file write that throws IoError on failure.
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace pano4d::io
