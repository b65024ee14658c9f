#pragma once

// Per-frame fusion of tangent-view monocular depths into one panorama depth:
// per-view scale, per-pixel shift and a shared direction -> depth field.

#include "pano4d/camera.hpp"
#include "pano4d/geometric_field.hpp"
#include "pano4d/image.hpp"

#include <cstdint>
#include <vector>

namespace pano4d::spatial {

/// K single-channel depth maps, one per tangent camera, all h x w.
struct TangentDepthSet {
  std::vector<Image> depths;
  std::vector<PerspectiveCamera> cameras;

  int count() const { return static_cast<int>(depths.size()); }
  int height() const { return depths.empty() ? 0 : depths.front().height(); }
  int width() const { return depths.empty() ? 0 : depths.front().width(); }

  /// Throws ArgumentError on bad shapes or non-positive depths. Warns when
  /// the camera footprints leave part of the sphere uncovered.
  void validate(Warnings* warnings = nullptr) const;
};

struct AlignmentParams {
  std::vector<double> raw_scale;  // alpha_k; effective scale is softplus(alpha_k)
  std::vector<Image> shift;       // beta_k, h x w each

  /// alpha = softplus^-1(1), beta = 0.
  static AlignmentParams identity(int views, int height, int width);
  double effective_scale(int k) const { return softplus(raw_scale[static_cast<std::size_t>(k)]); }
  Image corrected(const TangentDepthSet& views, int k) const;
};

struct SpatialAlignConfig {
  double lambda_alpha = 1e-4;
  double lambda_beta = 10.0;
  int iterations = 1000;  // L-BFGS iterations
  std::uint64_t seed = 0;
  FieldArchitecture field;

  void validate() const;
  bool operator==(const SpatialAlignConfig&) const = default;
};

/// Mean over all pixels of (softplus(alpha_k) D + beta - field(v))^2.
double depth_loss(const AlignmentParams& params, const GeometricField& field, const TangentDepthSet& views);
/// sum_k (softplus(alpha_k) - 1)^2
double scale_reg(const AlignmentParams& params);
/// Sum of squared forward differences of each shift grid, no wraparound.
double shift_smoothness(const AlignmentParams& params);

struct Objective {
  double depth = 0.0;
  double scale = 0.0;
  double shift = 0.0;
  double total = 0.0;
};

Objective alignment_objective(const AlignmentParams& params, const GeometricField& field,
                              const TangentDepthSet& views, const SpatialAlignConfig& cfg);

struct AlignmentGradient {
  std::vector<double> raw_scale;
  std::vector<Image> shift;
  std::vector<double> field;
};

/// Analytic gradient of the weighted objective.
AlignmentGradient alignment_gradient(const AlignmentParams& params, const GeometricField& field,
                                     const TangentDepthSet& views, const SpatialAlignConfig& cfg);

struct AlignmentResult {
  AlignmentParams params;
  GeometricField field;
  std::vector<double> trace;  // objective of every accepted iterate, non-increasing
  Objective initial;          // at the start of the gradient iterations
  Objective final;
};

/// Closed-form per-view scale and constant shift from the view overlaps,
/// then joint L-BFGS with a Wolfe line search over scales, shifts and the
/// field. Throws OptimizationError on a non-finite objective.
AlignmentResult align(const TangentDepthSet& views, const SpatialAlignConfig& cfg, Warnings* warnings = nullptr);

/// Inverse-depth weighted, edge-feathered blend of the corrected views.
/// Uncovered pixels (or pixels whose covering views all have non-positive
/// corrected depth) take the field value.
ErpFrame fuse_panorama_depth(const TangentDepthSet& views, const AlignmentParams& params, const GeometricField& field,
                             ErpDims dst);

/// Unit view directions of every pixel of every view, view-major.
std::vector<Vec3> pixel_directions(const TangentDepthSet& views);

}  // namespace pano4d::spatial
