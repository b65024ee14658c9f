#pragma once

#include "pano4d/core.hpp"

#include <optional>
#include <vector>

namespace pano4d {

/// Tangent-plane (gnomonic) view of the sphere. Azimuth increases with ERP
/// longitude; elevation with latitude. The frustum is square.
struct PerspectiveCamera {
  double azimuth = 0.0;    // radians
  double elevation = 0.0;  // radians
  double fov = kPi / 2.0;  // radians, full angle across the image
  int height = 1;
  int width = 1;

  /// Throws ArgumentError unless 0 < fov < pi, resolution >= 1x1 and square.
  void validate() const;

  Vec3 forward() const;
  Vec3 right() const;
  Vec3 up() const;
  double tan_half_fov() const;

  /// Unit ray through continuous pixel coordinate (col, row); pixel i's
  /// center sits at coordinate i and row 0 is the top.
  Vec3 pixel_ray(double col, double row) const;
  /// Inverse of pixel_ray. Empty when the direction is behind the camera.
  std::optional<Vec2> project(const Vec3& dir) const;

  bool operator==(const PerspectiveCamera&) const = default;
};

struct ViewRig {
  std::vector<PerspectiveCamera> cameras;

  /// Four equatorial 90 degree views at azimuths 0, 90, 180, 270.
  static ViewRig standard(int resolution);
};

/// K tangent cameras covering the whole sphere with overlap. K == 20 uses
/// icosahedron face centers at 90 degrees FOV; K == 8 uses cube vertex
/// directions at 120 degrees; other counts use a Fibonacci lattice.
std::vector<PerspectiveCamera> tangent_rig(int count, int resolution);

/// Pinhole camera with a rigid pose. `rotation` maps camera coordinates
/// (x right, y down, z forward) to world; `position` is the camera center.
struct SceneCamera {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  double fov = kPi / 2.0;
  int height = 1;
  int width = 1;

  void validate() const;
  double focal() const;  // pixels; square pixels, square frustum fov
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }

  /// Scene camera looking along a tangent view of a panorama captured at
  /// `pose_rotation`/`pose_position`.
  static SceneCamera from_tangent(const PerspectiveCamera& view, const Mat3& pose_rotation = Mat3::Identity(),
                                  const Vec3& pose_position = Vec3::Zero());
};

/// Unit direction for longitude/latitude (radians). Longitude 0 / latitude 0
/// is +z, longitude +pi/2 is +x, latitude +pi/2 is +y.
Vec3 direction_from_lonlat(double lon, double lat);
Vec2 lonlat_from_direction(const Vec3& dir);

/// Rotation-matrix validity: orthonormal with determinant +1 (tolerance 1e-6).
bool is_rotation(const Mat3& r, double tol = 1e-6);

}  // namespace pano4d
