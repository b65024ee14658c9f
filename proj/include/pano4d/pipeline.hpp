#pragma once

// Run configuration, its JSON form, and render trajectories.

#include "pano4d/camera.hpp"
#include "pano4d/gaussian_optimize.hpp"
#include "pano4d/spatial_alignment.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pano4d::pipeline {

/// Perspective rig used by `project`: 4 views selects the standard
/// equatorial 90 degree rig, any other count the full-sphere tangent rig.
struct RigConfig {
  int views = 4;
  int resolution = 256;

  std::vector<PerspectiveCamera> cameras() const;
  void validate() const;
  bool operator==(const RigConfig&) const = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;  // overrides the seeds of the stage configs
  RigConfig rig;
  spatial::SpatialAlignConfig spatial;
  int fused_height = 256;  // ERP height of the fused panorama depth
  gs::ReconstructionConfig reconstruction;

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// JSON with every field written out. Parsing starts from the defaults,
/// so absent keys keep them; unknown keys and ill-typed values throw
/// ArgumentError.
std::string to_json(const gs::ReconLossConfig& cfg);
std::string to_json(const PipelineConfig& cfg);
gs::ReconLossConfig recon_loss_config_from_json(const std::string& text);
PipelineConfig pipeline_config_from_json(const std::string& text);

struct Keyframe {
  SceneCamera camera;
  int frame = 0;  // Gaussian frame set rendered at this keyframe
};

/// Keyframes joined by `steps_per_segment` steps each: positions and fov
/// interpolate linearly, rotations by quaternion slerp. A step samples the
/// frame of its nearest keyframe (the earlier one at the midpoint). Each
/// step camera is then perturbed by a seeded random rotation and
/// translation of the given magnitudes.
struct TrajectorySpec {
  std::vector<Keyframe> keyframes;
  int steps_per_segment = 1;
  double perturb_rotation_deg = 0.0;
  double perturb_translation = 0.0;

  /// Throws ArgumentError when empty, when keyframe resolutions differ, or
  /// when a frame index falls outside [0, frame_count) (skipped when
  /// frame_count < 0).
  void validate(int frame_count = -1) const;
};

struct TrajectoryStep {
  SceneCamera camera;
  int frame = 0;
};

std::vector<TrajectoryStep> expand_trajectory(const TrajectorySpec& spec, std::uint64_t seed);

std::string to_json(const TrajectorySpec& spec);
TrajectorySpec trajectory_from_json(const std::string& text);

}  // namespace pano4d::pipeline
