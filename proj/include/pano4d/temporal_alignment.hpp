#pragma once

// Per-frame affine calibration of panorama depth against an external metric
// depth sequence seen from the center view.

#include "pano4d/camera.hpp"
#include "pano4d/image.hpp"

#include <vector>

namespace pano4d::temporal {

/// Externally estimated metric depth of the center view plus camera pose,
/// one entry per frame.
struct MetricReference {
  std::vector<Image> depths;
  std::vector<SceneCamera> poses;

  int frame_count() const { return static_cast<int>(depths.size()); }
  /// Throws ArgumentError on count/shape mismatch, non-positive depths or
  /// non-rigid rotations.
  void validate() const;
};

struct TemporalCalibration {
  double alpha = 1.0;
  double beta = 0.0;
};

/// Center view used for calibration: azimuth 0, elevation 0, with the
/// reference pose's field of view and resolution.
PerspectiveCamera reference_camera(const SceneCamera& pose);

/// Panorama radial depth sampled bilinearly along each pixel ray. Depth is
/// radial on both sides, so values pass through unchanged.
Image center_perspective_depth(const ErpFrame& pano_depth, const PerspectiveCamera& ref_cam);

/// Lower median of the values (copy is sorted).
double lower_median(std::vector<double> values);

/// alpha = median(d_metric / d), then beta = median(d_metric - alpha d),
/// over pixels where `mask` is nonzero (all pixels when mask is null).
/// Zero or non-finite d is rejected; negative d is accepted and yields a
/// negative alpha, which align_sequence reports as a warning.
TemporalCalibration calibrate_frame(const Image& d, const Image& d_metric, const Image* mask = nullptr);

struct AlignedSequence {
  std::vector<ErpFrame> frames;
  std::vector<TemporalCalibration> calibrations;
};

/// Calibrates every frame and applies alpha * D + beta to the whole panorama.
/// A frame with alpha <= 0 is still processed and produces a warning.
/// Frames are processed on up to `jobs` threads; results keep frame order.
AlignedSequence align_sequence(const std::vector<ErpFrame>& pano_depths, const MetricReference& ref,
                               Warnings* warnings = nullptr, const std::vector<Image>* masks = nullptr,
                               int jobs = 1);

}  // namespace pano4d::temporal
