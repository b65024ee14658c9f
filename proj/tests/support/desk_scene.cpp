#include "support/desk_scene.hpp"

#include <cmath>
#include <limits>

namespace synthetic {

namespace {

Vec3 wall_color(const Vec3& p) {
  return Vec3(0.5 + 0.28 * std::sin(1.3 * p.x() + 0.7 * p.z()) + 0.14 * std::sin(3.1 * p.y() + 2.3 * p.x()),
              0.5 + 0.28 * std::sin(1.1 * p.z() - 0.9 * p.y()) + 0.14 * std::sin(2.7 * p.x() - 2.9 * p.z()),
              0.5 + 0.28 * std::cos(0.8 * p.x() + 1.4 * p.y() + 0.6 * p.z()) + 0.14 * std::sin(3.3 * p.z()));
}

Vec3 sphere_color(const Vec3& n) {
  const double band = 0.5 + 0.5 * std::sin(4.0 * n.y());
  return Vec3(0.85, 0.35 + 0.4 * band, 0.15);
}

Vec3 erp_dir(pano4d::ErpDims dims, double x, double y) {
  const double lon = 2.0 * M_PI * (x + 0.5) / dims.width - M_PI;
  const double lat = M_PI / 2.0 - M_PI * (y + 0.5) / dims.height;
  return Vec3(std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon));
}

}  // namespace

DeskScene::Hit DeskScene::trace(const Vec3& origin, const Vec3& dir, int frame) const {
  // Exit point of the box.
  double t_box = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (dir(k) > 0.0) t_box = std::min(t_box, (room_half_extent(k) - origin(k)) / dir(k));
    if (dir(k) < 0.0) t_box = std::min(t_box, (-room_half_extent(k) - origin(k)) / dir(k));
  }
  const Vec3 center = sphere_start + frame * sphere_velocity;
  const Vec3 oc = origin - center;
  const double b = dir.dot(oc);
  const double disc = b * b - (oc.squaredNorm() - sphere_radius * sphere_radius);
  if (disc > 0.0) {
    const double t = -b - std::sqrt(disc);
    if (t > 0.0 && t < t_box) return {t, sphere_color((origin + t * dir - center) / sphere_radius)};
  }
  return {t_box, wall_color(origin + t_box * dir)};
}

pano4d::SceneCamera DeskScene::pose(int frame) const {
  pano4d::SceneCamera cam;
  cam.position = camera_start + frame * camera_velocity;
  return cam;
}

pano4d::ErpFrame DeskScene::panorama_rgb(int frame, pano4d::ErpDims dims) const {
  const Vec3 origin = pose(frame).position;
  pano4d::ErpFrame out(dims.height, 3);
  const int s = supersample;
  for (int v = 0; v < dims.height; ++v)
    for (int u = 0; u < dims.width; ++u) {
      Vec3 acc = Vec3::Zero();
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
          acc += trace(origin, erp_dir(dims, u - 0.5 + (j + 0.5) / s, v - 0.5 + (i + 0.5) / s), frame).color;
      acc /= s * s;
      for (int ch = 0; ch < 3; ++ch) out.at(v, u, ch) = acc(ch);
    }
  return out;
}

pano4d::ErpFrame DeskScene::panorama_depth(int frame, pano4d::ErpDims dims) const {
  const Vec3 origin = pose(frame).position;
  pano4d::ErpFrame out(dims.height, 1);
  for (int v = 0; v < dims.height; ++v)
    for (int u = 0; u < dims.width; ++u) out.at(v, u) = trace(origin, erp_dir(dims, u, v), frame).distance;
  return out;
}

pano4d::Image DeskScene::view_rgb(const pano4d::SceneCamera& cam, int frame) const {
  pano4d::Image out(cam.height, cam.width, 3);
  const double f = cam.focal();
  const int s = supersample;
  for (int r = 0; r < cam.height; ++r)
    for (int c = 0; c < cam.width; ++c) {
      Vec3 acc = Vec3::Zero();
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
          const double px = c + (j + 0.5) / s, py = r + (i + 0.5) / s;
          const Vec3 local((px - cam.cx()) / f, (py - cam.cy()) / f, 1.0);
          acc += trace(cam.position, (cam.rotation * local).normalized(), frame).color;
        }
      acc /= s * s;
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = acc(ch);
    }
  return out;
}

}  // namespace synthetic
