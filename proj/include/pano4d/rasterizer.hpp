#pragma once

// EWA splatting of 3D Gaussians with an analytic backward pass.
//
// Pixel (col, row) is sampled at (col + 0.5, row + 0.5); the principal point
// is the image center. A Gaussian contributes
//   alpha = min(0.9999, o * exp(-q / 2))  where q = x^T conic x <= 9,
// and nothing outside its 3-sigma ellipse. Contributions are composited
// front to back by view-space depth (ties broken by list index) and a pixel
// stops once transmittance falls below 1e-8. Depth is the alpha-weighted mean
// of view-space z.

#include "pano4d/camera.hpp"
#include "pano4d/gaussian.hpp"
#include "pano4d/image.hpp"

#include <cstdint>
#include <vector>

namespace pano4d::gs {

inline constexpr double kMaxAlpha = 0.9999;
inline constexpr double kCutoffMahalanobis2 = 9.0;
inline constexpr double kMinTransmittance = 1e-8;
inline constexpr double kNearPlane = 0.01;
inline constexpr double kScreenDilation = 0.3;  // added to the 2D covariance diagonal

/// Screen-space footprint of one Gaussian.
struct Projected {
  bool visible = false;
  double mean_x = 0.0, mean_y = 0.0;
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;  // inverse 2D covariance [[a b] [b c]]
  double depth = 0.0;                                  // view-space z
  double extent_x = 0.0, extent_y = 0.0;               // half-size of the 3-sigma ellipse's bounding box
};

/// 2D projection of a Gaussian: EWA with the perspective Jacobian (tangents
/// clamped to 1.3x the half field of view) and a 0.3 px^2 dilation.
Projected project_gaussian(const Gaussian3D& g, const SceneCamera& cam);

struct Rendering {
  Image color;  // h x w x 3
  Image depth;  // h x w, alpha-weighted mean view-space z; 0 where alpha == 0
  Image alpha;  // h x w, accumulated opacity in [0, 1]

  // State kept for the backward pass.
  SceneCamera camera;
  std::vector<Projected> projected;
  std::vector<std::uint32_t> order;         // visible Gaussian ids, front to back
  std::vector<std::uint32_t> last_contrib;  // per pixel: one past the rank of the last splat composited
  std::vector<double> final_transmittance;  // per pixel
};

Rendering render(const GaussianSet& gaussians, const SceneCamera& cam);

/// Upstream gradients; an empty image means zero.
struct RenderGradient {
  Image color;
  Image depth;
  Image alpha;
};

/// d loss / d parameters in the flat layout of `flatten`.
std::vector<double> render_backward(const GaussianSet& gaussians, const Rendering& rendering,
                                    const RenderGradient& upstream);

}  // namespace pano4d::gs
