#include "pano4d/camera.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pano4d {

// World frame: x right, y down, z forward (the panorama's longitude 0 /
// latitude 0 direction). Longitude grows toward +x, latitude toward -y.
Vec3 direction_from_lonlat(double lon, double lat) {
  const double c = std::cos(lat);
  return {c * std::sin(lon), -std::sin(lat), c * std::cos(lon)};
}

Vec2 lonlat_from_direction(const Vec3& dir) {
  const double lon = std::atan2(dir.x(), dir.z());
  const double lat = std::atan2(-dir.y(), std::hypot(dir.x(), dir.z()));
  return {lon, lat};
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < tol && std::abs(r.determinant() - 1.0) < tol;
}

void PerspectiveCamera::validate() const {
  if (!(fov > 0.0 && fov < kPi)) throw ArgumentError("camera fov must lie in (0, pi)");
  if (height < 1 || width < 1) throw ArgumentError("camera resolution must be at least 1x1");
  if (height != width) throw ArgumentError("perspective cameras are square (h == w)");
  if (!std::isfinite(azimuth) || !std::isfinite(elevation)) throw ArgumentError("camera angles must be finite");
}

Vec3 PerspectiveCamera::forward() const { return direction_from_lonlat(azimuth, elevation); }
Vec3 PerspectiveCamera::right() const { return {std::cos(azimuth), 0.0, -std::sin(azimuth)}; }
Vec3 PerspectiveCamera::up() const { return direction_from_lonlat(azimuth, elevation + kPi / 2.0); }
double PerspectiveCamera::tan_half_fov() const { return std::tan(0.5 * fov); }

Vec3 PerspectiveCamera::pixel_ray(double col, double row) const {
  const double t = tan_half_fov();
  const double xn = (2.0 * (col + 0.5) / width - 1.0) * t;
  const double yn = (2.0 * (row + 0.5) / height - 1.0) * t;
  return (forward() + xn * right() - yn * up()).normalized();
}

std::optional<Vec2> PerspectiveCamera::project(const Vec3& dir) const {
  const double z = dir.dot(forward());
  if (z <= 0.0) return std::nullopt;
  const double t = tan_half_fov();
  const double xn = dir.dot(right()) / z;
  const double yn = -dir.dot(up()) / z;
  return Vec2{(xn / t + 1.0) * 0.5 * width - 0.5, (yn / t + 1.0) * 0.5 * height - 0.5};
}

ViewRig ViewRig::standard(int resolution) {
  ViewRig rig;
  for (int i = 0; i < 4; ++i) {
    rig.cameras.push_back({deg_to_rad(90.0 * i), 0.0, kPi / 2.0, resolution, resolution});
  }
  return rig;
}

namespace {

PerspectiveCamera camera_facing(const Vec3& d, double fov, int resolution) {
  const Vec2 ll = lonlat_from_direction(d.normalized());
  return {ll.x(), ll.y(), fov, resolution, resolution};
}

}  // namespace

std::vector<PerspectiveCamera> tangent_rig(int count, int resolution) {
  if (count < 1) throw ArgumentError("tangent rig needs at least one camera");
  std::vector<PerspectiveCamera> cams;
  if (count == 20) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> dirs;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) dirs.emplace_back(sx, sy, sz);
    for (int a : {-1, 1})
      for (int b : {-1, 1}) {
        dirs.emplace_back(0.0, a / phi, b * phi);
        dirs.emplace_back(a / phi, b * phi, 0.0);
        dirs.emplace_back(a * phi, 0.0, b / phi);
      }
    for (const auto& d : dirs) cams.push_back(camera_facing(d, kPi / 2.0, resolution));
  } else if (count == 8) {
    for (int i = 0; i < 4; ++i) {
      for (double el : {1.0, -1.0}) {
        cams.push_back({deg_to_rad(45.0 + 90.0 * i), el * std::atan(1.0 / std::sqrt(2.0)), deg_to_rad(120.0),
                        resolution, resolution});
      }
    }
  } else {
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
      const double a = golden * i;
      cams.push_back(camera_facing(Vec3(r * std::sin(a), y, r * std::cos(a)), kPi / 2.0, resolution));
    }
  }
  std::stable_sort(cams.begin(), cams.end(), [](const auto& a, const auto& b) {
    if (a.elevation != b.elevation) return a.elevation > b.elevation;
    return a.azimuth < b.azimuth;
  });
  return cams;
}

void SceneCamera::validate() const {
  if (!is_rotation(rotation)) throw ArgumentError("camera rotation is not a proper rotation");
  if (!position.allFinite()) throw ArgumentError("camera position must be finite");
  if (!(fov > 0.0 && fov < kPi)) throw ArgumentError("camera fov must lie in (0, pi)");
  if (height < 1 || width < 1) throw ArgumentError("camera resolution must be at least 1x1");
}

double SceneCamera::focal() const { return 0.5 * width / std::tan(0.5 * fov); }

SceneCamera SceneCamera::from_tangent(const PerspectiveCamera& view, const Mat3& pose_rotation,
                                      const Vec3& pose_position) {
  Mat3 local;
  local.col(0) = view.right();
  local.col(1) = -view.up();
  local.col(2) = view.forward();
  SceneCamera cam;
  cam.rotation = pose_rotation * local;
  cam.position = pose_position;
  cam.fov = view.fov;
  cam.height = view.height;
  cam.width = view.width;
  return cam;
}

}  // namespace pano4d
