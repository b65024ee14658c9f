#pragma once

// 3D Gaussian primitives, lifting from panorama depth, and PLY storage.

#include "pano4d/camera.hpp"
#include "pano4d/image.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <vector>

namespace pano4d::gs {

using Vec4 = Eigen::Vector4d;

struct Gaussian3D {
  Vec3 position = Vec3::Zero();
  Vec4 rotation{1.0, 0.0, 0.0, 0.0};  // quaternion (w, x, y, z)
  Vec3 log_scale = Vec3::Zero();
  double opacity_raw = 0.0;  // opacity = sigmoid(opacity_raw)
  Vec3 color = Vec3::Zero();

  double opacity() const { return sigmoid(opacity_raw); }
  Vec3 scale() const { return log_scale.array().exp(); }
  Mat3 rotation_matrix() const;
  /// R S S^T R^T
  Mat3 covariance() const;

  bool operator==(const Gaussian3D&) const = default;
};

/// Flat layout used by gradients and the optimizer, per Gaussian:
/// position 0-2, rotation 3-6, log_scale 7-9, opacity_raw 10, color 11-13.
inline constexpr int kParamsPerGaussian = 14;
namespace slot {
inline constexpr int position = 0;
inline constexpr int rotation = 3;
inline constexpr int log_scale = 7;
inline constexpr int opacity = 10;
inline constexpr int color = 11;
}  // namespace slot

std::vector<double> flatten(std::span<const Gaussian3D> gaussians);
std::vector<Gaussian3D> unflatten(std::span<const double> flat);

using GaussianSet = std::vector<Gaussian3D>;

/// T independent Gaussian sets.
struct GaussianFrameSet {
  std::vector<GaussianSet> frames;
  int frame_count() const { return static_cast<int>(frames.size()); }
};

/// One Gaussian per ERP pixel on a `stride` grid (pixels (stride*i, stride*j)),
/// placed at pose.position + pose.rotation * (depth * dir). Color comes from
/// the pixel, scale is isotropic at depth * (pi / H) * stride, opacity 0.5 and
/// identity rotation. Throws ArgumentError on mismatched shapes or depth <= 0.
GaussianSet lift_depth_to_gaussians(const ErpFrame& pano_rgb, const ErpFrame& pano_depth, int stride,
                                    const Mat3& rotation = Mat3::Identity(), const Vec3& position = Vec3::Zero());

/// Removes Gaussians whose opacity is below `threshold`.
GaussianSet prune_by_opacity(const GaussianSet& gaussians, double threshold = 0.005);

/// Binary little-endian PLY, float32 properties x y z quat_w quat_x quat_y
/// quat_z log_scale_x log_scale_y log_scale_z opacity_raw r g b.
void write_ply(const std::filesystem::path& path, const GaussianSet& gaussians);
GaussianSet read_ply(const std::filesystem::path& path);

}  // namespace pano4d::gs
