#pragma once

// Equirectangular <-> tangent-plane geometry, seam operators, spherical
// positional encodings and panorama/perspective correspondence masks.
//
// Pixel convention: ERP pixel (u, v) has longitude 2*pi*(u + 0.5)/W - pi and
// latitude pi/2 - pi*(v + 0.5)/H. All functions here are pure.

#include "pano4d/camera.hpp"
#include "pano4d/image.hpp"

#include <vector>

namespace pano4d::erp {

enum class Sampling { Nearest, Bilinear };

/// Unit direction through the center of ERP pixel (u, v).
Vec3 dir_for_erp_pixel(ErpDims dims, int u, int v);
/// Continuous ERP coordinate (x, y) of a direction; pixel centers at integers.
Vec2 erp_coord_for_dir(ErpDims dims, const Vec3& dir);
/// Nearest ERP pixel (u, v) for a direction.
std::pair<int, int> erp_pixel_for_dir(ErpDims dims, const Vec3& dir);

/// Samples all channels at a continuous ERP coordinate. Wraps horizontally,
/// clamps vertically at the poles.
void sample_erp(const Image& src, double x, double y, Sampling sampling, double* out);

/// Samples a perspective image at a continuous pixel coordinate, clamping to
/// the border.
void sample_image(const Image& src, double x, double y, Sampling sampling, double* out);

Image project_erp_to_perspective(const Image& src, const PerspectiveCamera& cam, Sampling sampling);

struct ErpProjection {
  ErpFrame frame;
  std::vector<char> coverage;  // H*W flags, row-major

  bool covered(int u, int v) const { return coverage[static_cast<std::size_t>(v) * frame.width() + u] != 0; }
};

/// Fills the ERP pixels whose rays land inside the perspective image.
ErpProjection project_perspective_to_erp(const Image& src, const PerspectiveCamera& cam, ErpDims dst,
                                         Sampling sampling = Sampling::Nearest);

/// Horizontal wraparound padding: the left pad copies the rightmost columns.
Image circular_pad(const Image& frame, int pad);

/// Rolls every row right by `shift` columns (negative rolls left).
Image roll_columns(const Image& frame, int shift);

/// Horizontal roll by W/4 columns, i.e. +90 degrees of longitude.
ErpFrame rotate_latent_90(const ErpFrame& frame);

/// Nearest-neighbor projection of one panoramic noise field into every rig view.
std::vector<Image> project_shared_noise(const ErpFrame& pano_noise, const ViewRig& rig);

/// Row-major encodings, one `dim`-vector per direction.
struct SphericalPosEncoding {
  int dim = 0;
  std::vector<double> values;

  std::size_t count() const { return dim == 0 ? 0 : values.size() / dim; }
  const double* row(std::size_t i) const { return values.data() + i * dim; }
};

struct PosEncodingOptions {
  double min_frequency = 1.0;
  double max_frequency = 8.0;
};

/// Sinusoidal encoding of unit directions. Each frequency band contributes
/// sin/cos of the frequency times each Cartesian component; the components are
/// themselves built from sin/cos of longitude and cos/sin of latitude, so the
/// encoding is continuous across the seam and at the poles. `dim` must be even
/// and >= 6; entries beyond the last whole band of six are zero.
SphericalPosEncoding spherical_pos_encoding(const std::vector<Vec3>& dirs, int dim,
                                            PosEncodingOptions opts = {});

/// Token grid obtained by integer downsampling of a pixel grid.
struct TokenGrid {
  int rows = 0;
  int cols = 0;
  int count() const { return rows * cols; }
  bool operator==(const TokenGrid&) const = default;
};

/// Token-center directions (row-major) for a panorama token grid.
std::vector<Vec3> erp_token_dirs(TokenGrid grid);
/// Token-center directions (row-major) for a perspective token grid over `cam`.
std::vector<Vec3> perspective_token_dirs(TokenGrid grid, const PerspectiveCamera& cam);

/// Boolean matrix [panorama tokens x perspective tokens], row-major.
class CorrespondenceMask {
 public:
  CorrespondenceMask() = default;
  CorrespondenceMask(int pano_tokens, int persp_tokens)
      : pano_(pano_tokens), persp_(persp_tokens), bits_(static_cast<std::size_t>(pano_tokens) * persp_tokens, 0) {}

  int pano_tokens() const { return pano_; }
  int persp_tokens() const { return persp_; }
  bool operator()(int p, int q) const { return bits_[static_cast<std::size_t>(p) * persp_ + q] != 0; }
  void set(int p, int q, bool v = true) { bits_[static_cast<std::size_t>(p) * persp_ + q] = v ? 1 : 0; }
  std::size_t true_count() const;

  bool operator==(const CorrespondenceMask&) const = default;

 private:
  int pano_ = 0;
  int persp_ = 0;
  std::vector<char> bits_;
};

/// mask(p, q) holds iff perspective token q's central ray lands inside
/// panorama token p's footprint dilated by one token (wrapping in longitude,
/// clamped at the poles).
CorrespondenceMask build_correspondence_mask(TokenGrid pano_grid, TokenGrid persp_grid, const PerspectiveCamera& cam);

}  // namespace pano4d::erp
