#pragma once

// Per-frame Gaussian optimization under the composite reconstruction loss,
// and the T-frame driver.

#include "pano4d/gaussian.hpp"
#include "pano4d/recon_losses.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace pano4d::gs {

struct ReconLossConfig {
  double lambda_l1 = 0.8;
  double lambda_ssim = 0.2;
  double lambda_lpips = 0.05;
  double lambda_sem = 1.0;
  double lambda_geo = 0.05;
  int semantic_start = 5400;  // semantic term active for iterations in [start, end)
  int semantic_end = 9000;
  int iterations = 15000;
  double perturb_rotation_deg = 2.0;
  double perturb_translation = 0.01;  // fraction of the scene radius

  RgbLossWeights rgb_weights() const { return {lambda_l1, lambda_ssim, lambda_lpips}; }
  bool semantic_active(int iteration) const { return iteration >= semantic_start && iteration < semantic_end; }
  /// Same weights with `total` iterations and the semantic window scaled by
  /// total / iterations.
  ReconLossConfig rescaled(int total) const;
  void validate() const;
  bool operator==(const ReconLossConfig&) const = default;
};

/// Adam learning rates per attribute with step decay.
struct OptimizerSchedule {
  double lr_position = 1.6e-4;  // multiplied by the scene radius
  double lr_rotation = 1e-3;
  double lr_log_scale = 5e-3;
  double lr_opacity = 0.05;
  double lr_color = 2.5e-3;
  std::vector<double> decay_at = {0.6, 0.85};  // fractions of the iteration budget
  double decay_factor = 0.3;

  double multiplier(int iteration, int total) const;
  void validate() const;
  bool operator==(const OptimizerSchedule&) const = default;
};

struct TrainingView {
  SceneCamera camera;
  Image target;           // h x w x 3
  Image reference_depth;  // h x w view-space z; empty disables the geometric term
};

/// Perceptual metric and feature extractor; a null entry removes its term.
struct ReconPlugins {
  const PerceptualMetric* perceptual = nullptr;
  const FeatureExtractor* features = nullptr;

  /// GradientPyramidMetric and PatchMeanExtractor.
  static ReconPlugins defaults();
};

struct LossRecord {
  int iteration = 0;
  double l1 = 0.0;
  double ssim = 0.0;  // 1 - SSIM
  double lpips = 0.0;
  double sem = 0.0;
  double geo = 0.0;
  double total = 0.0;
};

struct FrameResult {
  GaussianSet gaussians;
  std::vector<LossRecord> trace;  // one record per iteration, loss before the step
};

/// Rotation by `rotation_deg` about a uniformly random axis, then a
/// translation of length `translation` in a uniformly random direction.
SceneCamera perturb_camera(const SceneCamera& cam, double rotation_deg, double translation, std::mt19937_64& rng);

/// Median distance from the Gaussian centers to `center`.
double scene_radius(const GaussianSet& gaussians, const Vec3& center);

/// Adam over all Gaussian parameters; one training view per iteration, in a
/// seeded shuffled order. Quaternions are renormalized and colors clamped to
/// [0, 1] after each step. Throws OptimizationError on a non-finite loss.
FrameResult optimize_frame(const GaussianSet& init, const std::vector<TrainingView>& views,
                           const ReconLossConfig& cfg, const OptimizerSchedule& schedule = {},
                           std::uint64_t seed = 0, const ReconPlugins& plugins = ReconPlugins::defaults(),
                           Warnings* warnings = nullptr);

struct ReconstructionConfig {
  ReconLossConfig loss;
  OptimizerSchedule schedule;
  int views = 8;  // tangent training views per frame
  int view_resolution = 128;
  int lift_stride = 2;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const ReconstructionConfig&) const = default;
};

/// Tangent views of one panorama frame posed at `pose`. Targets are bilinear
/// projections of the RGB panorama; reference depth is the aligned radial
/// depth converted to view-space z, or `estimator` applied to the target.
std::vector<TrainingView> training_views(const ErpFrame& rgb, const ErpFrame& depth, const SceneCamera& pose,
                                         int views, int resolution, const DepthEstimator* estimator = nullptr);

struct Reconstruction {
  GaussianFrameSet scene;
  std::vector<std::vector<LossRecord>> traces;
};

/// Per frame: lift, build training views at pose t, optimize with seed
/// cfg.seed + t. Frames run on up to `jobs` threads; results keep frame order.
Reconstruction reconstruct_4d(const std::vector<ErpFrame>& video, const std::vector<ErpFrame>& depths,
                              const std::vector<SceneCamera>& poses, const ReconstructionConfig& cfg,
                              const ReconPlugins& plugins = ReconPlugins::defaults(), Warnings* warnings = nullptr,
                              int jobs = 1, const DepthEstimator* estimator = nullptr);

}  // namespace pano4d::gs
