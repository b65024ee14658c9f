#include "pano4d/gaussian.hpp"

#include "pano4d/erp_geometry.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace pano4d::gs {

namespace {

static_assert(std::endian::native == std::endian::little, "PLY IO assumes a little-endian host");

constexpr const char* kPropertyNames[kParamsPerGaussian] = {
    "x",           "y",           "z",           "quat_w",      "quat_x", "quat_y", "quat_z",
    "log_scale_x", "log_scale_y", "log_scale_z", "opacity_raw", "r",      "g",      "b"};

std::string ply_header(std::size_t count) {
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n";
  for (const char* name : kPropertyNames) h << "property float " << name << "\n";
  h << "end_header\n";
  return h.str();
}

}  // namespace

Mat3 Gaussian3D::rotation_matrix() const {
  const Vec4 q = rotation.normalized();
  return Eigen::Quaterniond(q(0), q(1), q(2), q(3)).toRotationMatrix();
}

Mat3 Gaussian3D::covariance() const {
  const Mat3 m = rotation_matrix() * scale().asDiagonal();
  return m * m.transpose();
}

std::vector<double> flatten(std::span<const Gaussian3D> gaussians) {
  std::vector<double> flat(gaussians.size() * kParamsPerGaussian);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    double* p = flat.data() + i * kParamsPerGaussian;
    const Gaussian3D& g = gaussians[i];
    for (int k = 0; k < 3; ++k) p[slot::position + k] = g.position(k);
    for (int k = 0; k < 4; ++k) p[slot::rotation + k] = g.rotation(k);
    for (int k = 0; k < 3; ++k) p[slot::log_scale + k] = g.log_scale(k);
    p[slot::opacity] = g.opacity_raw;
    for (int k = 0; k < 3; ++k) p[slot::color + k] = g.color(k);
  }
  return flat;
}

std::vector<Gaussian3D> unflatten(std::span<const double> flat) {
  if (flat.size() % kParamsPerGaussian != 0) throw ArgumentError("unflatten: size is not a multiple of 14");
  std::vector<Gaussian3D> out(flat.size() / kParamsPerGaussian);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* p = flat.data() + i * kParamsPerGaussian;
    Gaussian3D& g = out[i];
    g.position = Vec3(p[0], p[1], p[2]);
    g.rotation = Vec4(p[3], p[4], p[5], p[6]);
    g.log_scale = Vec3(p[7], p[8], p[9]);
    g.opacity_raw = p[10];
    g.color = Vec3(p[11], p[12], p[13]);
  }
  return out;
}

GaussianSet lift_depth_to_gaussians(const ErpFrame& pano_rgb, const ErpFrame& pano_depth, int stride,
                                    const Mat3& rotation, const Vec3& position) {
  if (stride < 1) throw ArgumentError("lift: stride must be >= 1");
  if (pano_rgb.channels() != 3) throw ArgumentError("lift: panorama must be RGB");
  if (pano_depth.channels() != 1) throw ArgumentError("lift: depth must be single-channel");
  if (pano_rgb.height() != pano_depth.height() || pano_rgb.width() != pano_depth.width())
    throw ArgumentError("lift: panorama and depth sizes differ");
  const ErpDims dims = dims_of(pano_depth);
  const double pitch = kPi / dims.height * stride;
  GaussianSet out;
  out.reserve(static_cast<std::size_t>((dims.height + stride - 1) / stride) * ((dims.width + stride - 1) / stride));
  for (int v = 0; v < dims.height; v += stride) {
    for (int u = 0; u < dims.width; u += stride) {
      const double d = pano_depth.at(v, u);
      if (!std::isfinite(d) || d <= 0.0) throw ArgumentError("lift: depth must be finite and positive");
      Gaussian3D g;
      g.position = position + rotation * (d * erp::dir_for_erp_pixel(dims, u, v));
      g.log_scale = Vec3::Constant(std::log(d * pitch));
      g.opacity_raw = 0.0;
      g.color = Vec3(pano_rgb.at(v, u, 0), pano_rgb.at(v, u, 1), pano_rgb.at(v, u, 2));
      out.push_back(g);
    }
  }
  return out;
}

GaussianSet prune_by_opacity(const GaussianSet& gaussians, double threshold) {
  GaussianSet out;
  for (const auto& g : gaussians)
    if (g.opacity() >= threshold) out.push_back(g);
  return out;
}

void write_ply(const std::filesystem::path& path, const GaussianSet& gaussians) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for writing");
  const std::string header = ply_header(gaussians.size());
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::vector<double> flat = flatten(gaussians);
  std::vector<float> values(flat.begin(), flat.end());
  f.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!f) throw IoError(path.string(), "write failed");
}

GaussianSet read_ply(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string(), "cannot open for reading");
  std::string line;
  std::getline(f, line);
  if (line != "ply") throw IoError(path.string(), "not a PLY file");
  std::getline(f, line);
  if (line != "format binary_little_endian 1.0") throw IoError(path.string(), "expected binary_little_endian PLY");
  std::size_t count = 0;
  bool have_count = false;
  int prop = 0;
  while (std::getline(f, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || !ls || have_count) throw IoError(path.string(), "unsupported element '" + line + "'");
      have_count = true;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      if (prop >= kParamsPerGaussian || type != "float" || name != kPropertyNames[prop])
        throw IoError(path.string(), "unexpected property '" + line + "'");
      ++prop;
    } else {
      throw IoError(path.string(), "unexpected header line '" + line + "'");
    }
  }
  if (line != "end_header" || !have_count || prop != kParamsPerGaussian)
    throw IoError(path.string(), "incomplete PLY header");
  std::vector<float> values(count * kParamsPerGaussian);
  f.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (static_cast<std::size_t>(f.gcount()) != values.size() * sizeof(float))
    throw IoError(path.string(), "truncated vertex data");
  const std::vector<double> flat(values.begin(), values.end());
  return unflatten(flat);
}

}  // namespace pano4d::gs
