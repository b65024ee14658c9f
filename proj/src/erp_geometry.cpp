#include "pano4d/erp_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pano4d::erp {

namespace {

int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

void check_dims(ErpDims dims) {
  if (dims.height < 1 || dims.width != 2 * dims.height) {
    throw ArgumentError("ERP dimensions require W == 2*H >= 2");
  }
}

}  // namespace

Vec3 dir_for_erp_pixel(ErpDims dims, int u, int v) {
  check_dims(dims);
  if (u < 0 || u >= dims.width || v < 0 || v >= dims.height) {
    throw ArgumentError("ERP pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") out of range");
  }
  const double lon = 2.0 * kPi * (u + 0.5) / dims.width - kPi;
  const double lat = kPi / 2.0 - kPi * (v + 0.5) / dims.height;
  return direction_from_lonlat(lon, lat);
}

Vec2 erp_coord_for_dir(ErpDims dims, const Vec3& dir) {
  const Vec2 ll = lonlat_from_direction(dir);
  return {(ll.x() + kPi) / (2.0 * kPi) * dims.width - 0.5, (kPi / 2.0 - ll.y()) / kPi * dims.height - 0.5};
}

std::pair<int, int> erp_pixel_for_dir(ErpDims dims, const Vec3& dir) {
  const Vec2 c = erp_coord_for_dir(dims, dir);
  const int u = wrap(static_cast<int>(std::floor(c.x() + 0.5)), dims.width);
  const int v = std::clamp(static_cast<int>(std::floor(c.y() + 0.5)), 0, dims.height - 1);
  return {u, v};
}

void sample_erp(const Image& src, double x, double y, Sampling sampling, double* out) {
  const int w = src.width();
  const int h = src.height();
  const int c = src.channels();
  if (sampling == Sampling::Nearest) {
    const int u = wrap(static_cast<int>(std::floor(x + 0.5)), w);
    const int v = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, h - 1);
    for (int ch = 0; ch < c; ++ch) out[ch] = src.at(v, u, ch);
    return;
  }
  const double fx0 = std::floor(x);
  const double tx = x - fx0;
  const int u0 = wrap(static_cast<int>(fx0), w);
  const int u1 = wrap(static_cast<int>(fx0) + 1, w);
  int v0, v1;
  double ty;
  if (y <= 0.0) {
    v0 = v1 = 0;
    ty = 0.0;
  } else if (y >= h - 1) {
    v0 = v1 = h - 1;
    ty = 0.0;
  } else {
    const double fy0 = std::floor(y);
    v0 = static_cast<int>(fy0);
    v1 = v0 + 1;
    ty = y - fy0;
  }
  for (int ch = 0; ch < c; ++ch) {
    const double top = (1.0 - tx) * src.at(v0, u0, ch) + tx * src.at(v0, u1, ch);
    const double bot = (1.0 - tx) * src.at(v1, u0, ch) + tx * src.at(v1, u1, ch);
    out[ch] = (1.0 - ty) * top + ty * bot;
  }
}

void sample_image(const Image& src, double x, double y, Sampling sampling, double* out) {
  const int w = src.width();
  const int h = src.height();
  const int c = src.channels();
  if (sampling == Sampling::Nearest) {
    const int u = std::clamp(static_cast<int>(std::floor(x + 0.5)), 0, w - 1);
    const int v = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, h - 1);
    for (int ch = 0; ch < c; ++ch) out[ch] = src.at(v, u, ch);
    return;
  }
  const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int u0 = std::min(static_cast<int>(cx), w - 1);
  const int v0 = std::min(static_cast<int>(cy), h - 1);
  const int u1 = std::min(u0 + 1, w - 1);
  const int v1 = std::min(v0 + 1, h - 1);
  const double tx = cx - u0;
  const double ty = cy - v0;
  for (int ch = 0; ch < c; ++ch) {
    const double top = (1.0 - tx) * src.at(v0, u0, ch) + tx * src.at(v0, u1, ch);
    const double bot = (1.0 - tx) * src.at(v1, u0, ch) + tx * src.at(v1, u1, ch);
    out[ch] = (1.0 - ty) * top + ty * bot;
  }
}

Image project_erp_to_perspective(const Image& src, const PerspectiveCamera& cam, Sampling sampling) {
  cam.validate();
  if (src.empty()) throw ArgumentError("source panorama is empty");
  const ErpDims dims = dims_of(src);
  Image out(cam.height, cam.width, src.channels());
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      const Vec2 c = erp_coord_for_dir(dims, cam.pixel_ray(col, row));
      sample_erp(src, c.x(), c.y(), sampling, &out.at(row, col));
    }
  }
  return out;
}

ErpProjection project_perspective_to_erp(const Image& src, const PerspectiveCamera& cam, ErpDims dst,
                                         Sampling sampling) {
  cam.validate();
  check_dims(dst);
  if (src.height() != cam.height || src.width() != cam.width) {
    throw ArgumentError("perspective image does not match camera resolution");
  }
  ErpProjection result{ErpFrame(dst.height, src.channels()), {}};
  result.coverage.assign(static_cast<std::size_t>(dst.height) * dst.width, 0);
  for (int v = 0; v < dst.height; ++v) {
    for (int u = 0; u < dst.width; ++u) {
      const auto p = cam.project(dir_for_erp_pixel(dst, u, v));
      if (!p) continue;
      const double x = p->x();
      const double y = p->y();
      if (x < -0.5 || x >= cam.width - 0.5 || y < -0.5 || y >= cam.height - 0.5) continue;
      sample_image(src, x, y, sampling, &result.frame.at(v, u));
      result.coverage[static_cast<std::size_t>(v) * dst.width + u] = 1;
    }
  }
  return result;
}

Image circular_pad(const Image& frame, int pad) {
  const int w = frame.width();
  if (pad < 0 || pad > w) throw ArgumentError("circular pad must lie in [0, W]");
  Image out(frame.height(), w + 2 * pad, frame.channels());
  for (int r = 0; r < frame.height(); ++r) {
    for (int c = 0; c < w + 2 * pad; ++c) {
      const int src_col = wrap(c - pad, w);
      for (int ch = 0; ch < frame.channels(); ++ch) out.at(r, c, ch) = frame.at(r, src_col, ch);
    }
  }
  return out;
}

Image roll_columns(const Image& frame, int shift) {
  const int w = frame.width();
  Image out(frame.height(), w, frame.channels());
  if (w == 0) return out;
  for (int r = 0; r < frame.height(); ++r) {
    for (int c = 0; c < w; ++c) {
      const int src_col = wrap(c - shift, w);
      for (int ch = 0; ch < frame.channels(); ++ch) out.at(r, c, ch) = frame.at(r, src_col, ch);
    }
  }
  return out;
}

ErpFrame rotate_latent_90(const ErpFrame& frame) {
  if (frame.width() % 4 != 0) throw ArgumentError("latent rotation needs W divisible by 4");
  return ErpFrame(roll_columns(frame, frame.width() / 4));
}

std::vector<Image> project_shared_noise(const ErpFrame& pano_noise, const ViewRig& rig) {
  std::vector<Image> out;
  out.reserve(rig.cameras.size());
  for (const auto& cam : rig.cameras) {
    out.push_back(project_erp_to_perspective(pano_noise, cam, Sampling::Nearest));
  }
  return out;
}

SphericalPosEncoding spherical_pos_encoding(const std::vector<Vec3>& dirs, int dim, PosEncodingOptions opts) {
  if (dim < 6 || dim % 2 != 0) throw ArgumentError("encoding dimension must be even and at least 6");
  if (!(opts.min_frequency > 0.0) || opts.max_frequency < opts.min_frequency) {
    throw ArgumentError("encoding frequencies must satisfy 0 < min <= max");
  }
  // Whole bands only; a partial band would weight some axes more than others.
  const int bands = dim / 6;
  std::vector<double> freqs(bands);
  for (int k = 0; k < bands; ++k) {
    const double t = bands == 1 ? 0.0 : static_cast<double>(k) / (bands - 1);
    freqs[k] = opts.min_frequency * std::pow(opts.max_frequency / opts.min_frequency, t);
  }
  SphericalPosEncoding enc;
  enc.dim = dim;
  enc.values.assign(dirs.size() * dim, 0.0);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const Vec3& d = dirs[i];
    if (!d.allFinite() || std::abs(d.norm() - 1.0) > 1e-6) {
      throw ArgumentError("spherical encoding requires unit directions");
    }
    double* row = enc.values.data() + i * dim;
    int j = 0;
    for (int k = 0; k < bands; ++k) {
      for (int axis = 0; axis < 3; ++axis) {
        row[j++] = std::sin(freqs[k] * d[axis]);
        row[j++] = std::cos(freqs[k] * d[axis]);
      }
    }
  }
  return enc;
}

std::vector<Vec3> erp_token_dirs(TokenGrid grid) {
  std::vector<Vec3> dirs;
  dirs.reserve(grid.count());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const double lon = 2.0 * kPi * (c + 0.5) / grid.cols - kPi;
      const double lat = kPi / 2.0 - kPi * (r + 0.5) / grid.rows;
      dirs.push_back(direction_from_lonlat(lon, lat));
    }
  }
  return dirs;
}

std::vector<Vec3> perspective_token_dirs(TokenGrid grid, const PerspectiveCamera& cam) {
  cam.validate();
  if (grid.rows < 1 || grid.cols < 1 || cam.width % grid.cols != 0 || cam.height % grid.rows != 0) {
    throw ArgumentError("perspective token grid must evenly divide the camera resolution");
  }
  const double fx = static_cast<double>(cam.width) / grid.cols;
  const double fy = static_cast<double>(cam.height) / grid.rows;
  std::vector<Vec3> dirs;
  dirs.reserve(grid.count());
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      dirs.push_back(cam.pixel_ray((c + 0.5) * fx - 0.5, (r + 0.5) * fy - 0.5));
    }
  }
  return dirs;
}

std::size_t CorrespondenceMask::true_count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

CorrespondenceMask build_correspondence_mask(TokenGrid pano_grid, TokenGrid persp_grid, const PerspectiveCamera& cam) {
  if (pano_grid.rows < 1 || pano_grid.cols < 1) throw ArgumentError("panorama token grid is empty");
  const auto persp_dirs = perspective_token_dirs(persp_grid, cam);
  CorrespondenceMask mask(pano_grid.count(), persp_grid.count());
  for (int q = 0; q < persp_grid.count(); ++q) {
    const Vec2 ll = lonlat_from_direction(persp_dirs[q]);
    const double x = (ll.x() + kPi) / (2.0 * kPi) * pano_grid.cols - 0.5;
    const double y = (kPi / 2.0 - ll.y()) / kPi * pano_grid.rows - 0.5;
    const int tc = static_cast<int>(std::floor(x + 0.5));
    const int tr = std::clamp(static_cast<int>(std::floor(y + 0.5)), 0, pano_grid.rows - 1);
    for (int dr = -1; dr <= 1; ++dr) {
      const int r = tr + dr;
      if (r < 0 || r >= pano_grid.rows) continue;
      for (int dc = -1; dc <= 1; ++dc) {
        mask.set(r * pano_grid.cols + wrap(tc + dc, pano_grid.cols), q);
      }
    }
  }
  return mask;
}

}  // namespace pano4d::erp
