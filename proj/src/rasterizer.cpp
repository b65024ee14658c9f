#include "pano4d/rasterizer.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>

namespace pano4d::gs {

namespace {

using Derivs = Eigen::Matrix<double, 10, 1>;
using AD = Eigen::AutoDiffScalar<Derivs>;

inline double value_of(double x) { return x; }
inline double value_of(const AD& x) { return x.value(); }

// Screen-space quantities in the order mean_x, mean_y, conic_a, conic_b,
// conic_c, depth.
template <class T>
bool project_impl(const T* mu, const T* quat, const T* log_scale, const SceneCamera& cam, T* out, double* extent) {
  using std::exp;
  using std::sqrt;
  const Mat3& w = cam.rotation;
  T t[3];
  for (int i = 0; i < 3; ++i)
    t[i] = w(0, i) * (mu[0] - cam.position(0)) + w(1, i) * (mu[1] - cam.position(1)) +
           w(2, i) * (mu[2] - cam.position(2));
  const T& z = t[2];
  if (!(value_of(z) > kNearPlane)) return false;

  const double f = cam.focal();
  const double lim_x = 1.3 * 0.5 * cam.width / f;
  const double lim_y = 1.3 * 0.5 * cam.height / f;
  T xz = t[0] / z;
  T yz = t[1] / z;
  if (value_of(xz) > lim_x) xz = T(lim_x);
  if (value_of(xz) < -lim_x) xz = T(-lim_x);
  if (value_of(yz) > lim_y) yz = T(lim_y);
  if (value_of(yz) < -lim_y) yz = T(-lim_y);
  const T j00 = f / z;
  const T j02 = -f * xz / z;
  const T j11 = f / z;
  const T j12 = -f * yz / z;

  const T n = sqrt(quat[0] * quat[0] + quat[1] * quat[1] + quat[2] * quat[2] + quat[3] * quat[3]);
  const T qw = quat[0] / n, qx = quat[1] / n, qy = quat[2] / n, qz = quat[3] / n;
  const T r[3][3] = {{1.0 - 2.0 * (qy * qy + qz * qz), 2.0 * (qx * qy - qw * qz), 2.0 * (qx * qz + qw * qy)},
                     {2.0 * (qx * qy + qw * qz), 1.0 - 2.0 * (qx * qx + qz * qz), 2.0 * (qy * qz - qw * qx)},
                     {2.0 * (qx * qz - qw * qy), 2.0 * (qy * qz + qw * qx), 1.0 - 2.0 * (qx * qx + qy * qy)}};
  const T s[3] = {exp(log_scale[0]), exp(log_scale[1]), exp(log_scale[2])};

  // Rows of W^T M with M = R diag(s); camera covariance is (W^T M)(W^T M)^T.
  T m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) m[i][k] = (w(0, i) * r[0][k] + w(1, i) * r[1][k] + w(2, i) * r[2][k]) * s[k];
  auto cov3 = [&](int i, int j) { return m[i][0] * m[j][0] + m[i][1] * m[j][1] + m[i][2] * m[j][2]; };
  const T c00 = cov3(0, 0), c01 = cov3(0, 1), c02 = cov3(0, 2), c11 = cov3(1, 1), c12 = cov3(1, 2),
          c22 = cov3(2, 2);

  const T a = j00 * j00 * c00 + 2.0 * j00 * j02 * c02 + j02 * j02 * c22 + kScreenDilation;
  const T b = j00 * j11 * c01 + j00 * j12 * c02 + j02 * j11 * c12 + j02 * j12 * c22;
  const T c = j11 * j11 * c11 + 2.0 * j11 * j12 * c12 + j12 * j12 * c22 + kScreenDilation;
  const T det = a * c - b * b;
  if (!(value_of(det) > 0.0)) return false;

  out[0] = f * t[0] / z + cam.cx();
  out[1] = f * t[1] / z + cam.cy();
  out[2] = c / det;
  out[3] = -b / det;
  out[4] = a / det;
  out[5] = z;
  // Bounding box of x^T conic x <= 9.
  extent[0] = 3.0 * std::sqrt(value_of(a));
  extent[1] = 3.0 * std::sqrt(value_of(c));
  return true;
}

// Inclusive pixel range whose centers fall inside the footprint's box.
struct PixelRange {
  int col0, col1, row0, row1;
  bool empty() const { return col0 > col1 || row0 > row1; }
};

PixelRange pixel_range(const Projected& p, int w, int h) {
  return {std::max(0, static_cast<int>(std::ceil(p.mean_x - p.extent_x - 0.5))),
          std::min(w - 1, static_cast<int>(std::floor(p.mean_x + p.extent_x - 0.5))),
          std::max(0, static_cast<int>(std::ceil(p.mean_y - p.extent_y - 0.5))),
          std::min(h - 1, static_cast<int>(std::floor(p.mean_y + p.extent_y - 0.5)))};
}

// Alpha of a splat at a pixel; 0 outside the cutoff ellipse.
inline double entry_alpha(const Projected& p, double opacity, double px, double py, double* q_out, double* dx,
                          double* dy) {
  *dx = px - p.mean_x;
  *dy = py - p.mean_y;
  const double q = p.conic_a * *dx * *dx + 2.0 * p.conic_b * *dx * *dy + p.conic_c * *dy * *dy;
  *q_out = q;
  if (!(q <= kCutoffMahalanobis2)) return 0.0;
  return std::min(kMaxAlpha, opacity * std::exp(-0.5 * q));
}

}  // namespace

Projected project_gaussian(const Gaussian3D& g, const SceneCamera& cam) {
  Projected p;
  double out[6];
  double extent[2];
  if (!project_impl(g.position.data(), g.rotation.data(), g.log_scale.data(), cam, out, extent)) return p;
  p.mean_x = out[0];
  p.mean_y = out[1];
  p.conic_a = out[2];
  p.conic_b = out[3];
  p.conic_c = out[4];
  p.depth = out[5];
  p.extent_x = extent[0];
  p.extent_y = extent[1];
  p.visible = !pixel_range(p, cam.width, cam.height).empty();
  return p;
}

Rendering render(const GaussianSet& gaussians, const SceneCamera& cam) {
  cam.validate();
  const int w = cam.width;
  const int h = cam.height;
  Rendering out;
  out.camera = cam;
  out.color = Image(h, w, 3);
  out.depth = Image(h, w, 1);
  out.alpha = Image(h, w, 1);
  out.projected.resize(gaussians.size());
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    out.projected[i] = project_gaussian(gaussians[i], cam);
    if (out.projected[i].visible) out.order.push_back(static_cast<std::uint32_t>(i));
  }
  std::sort(out.order.begin(), out.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double da = out.projected[a].depth, db = out.projected[b].depth;
    return da != db ? da < db : a < b;
  });

  const std::size_t npix = static_cast<std::size_t>(h) * w;
  out.last_contrib.assign(npix, static_cast<std::uint32_t>(out.order.size()));
  out.final_transmittance.assign(npix, 1.0);
  std::vector<char> done(npix, 0);
  std::vector<double>& trans = out.final_transmittance;
  std::vector<double> depth_sum(npix, 0.0);
  for (std::uint32_t rank = 0; rank < out.order.size(); ++rank) {
    const std::uint32_t id = out.order[rank];
    const Projected& p = out.projected[id];
    const double opacity = gaussians[id].opacity();
    const Vec3& c = gaussians[id].color;
    const PixelRange range = pixel_range(p, w, h);
    for (int row = range.row0; row <= range.row1; ++row) {
      for (int col = range.col0; col <= range.col1; ++col) {
        const std::size_t pix = static_cast<std::size_t>(row) * w + col;
        if (done[pix]) continue;
        double q, dx, dy;
        const double a = entry_alpha(p, opacity, col + 0.5, row + 0.5, &q, &dx, &dy);
        if (a == 0.0) continue;
        const double wgt = a * trans[pix];
        double* rgb = out.color.values().data() + 3 * pix;
        rgb[0] += wgt * c(0);
        rgb[1] += wgt * c(1);
        rgb[2] += wgt * c(2);
        depth_sum[pix] += wgt * p.depth;
        trans[pix] *= 1.0 - a;
        if (trans[pix] < kMinTransmittance) {
          done[pix] = 1;
          out.last_contrib[pix] = rank + 1;
        }
      }
    }
  }
  for (std::size_t pix = 0; pix < npix; ++pix) {
    const double acc = 1.0 - trans[pix];
    out.alpha.values()[pix] = acc;
    out.depth.values()[pix] = acc > 0.0 ? depth_sum[pix] / acc : 0.0;
  }
  return out;
}

std::vector<double> render_backward(const GaussianSet& gaussians, const Rendering& rendering,
                                    const RenderGradient& upstream) {
  const SceneCamera& cam = rendering.camera;
  const int w = cam.width;
  const int h = cam.height;
  if (rendering.projected.size() != gaussians.size())
    throw ArgumentError("render_backward: rendering does not belong to these Gaussians");
  auto check = [&](const Image& g, int ch) {
    if (!g.empty() && (g.height() != h || g.width() != w || g.channels() != ch))
      throw ArgumentError("render_backward: upstream gradient has the wrong shape");
  };
  check(upstream.color, 3);
  check(upstream.depth, 1);
  check(upstream.alpha, 1);

  // Per pixel: gradient w.r.t. composited color rgb, depth numerator and
  // accumulated alpha.
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  std::vector<double> g(5 * npix, 0.0);
  std::vector<char> active(npix, 0);
  for (std::size_t pix = 0; pix < npix; ++pix) {
    double* gp = g.data() + 5 * pix;
    if (!upstream.color.empty())
      for (int ch = 0; ch < 3; ++ch) gp[ch] = upstream.color.values()[3 * pix + ch];
    const double acc = 1.0 - rendering.final_transmittance[pix];
    if (!upstream.depth.empty() && acc > 0.0) {
      const double gd = upstream.depth.values()[pix];
      gp[3] = gd / acc;
      gp[4] -= gd * rendering.depth.values()[pix] / acc;
    }
    if (!upstream.alpha.empty()) gp[4] += upstream.alpha.values()[pix];
    active[pix] = gp[0] != 0.0 || gp[1] != 0.0 || gp[2] != 0.0 || gp[3] != 0.0 || gp[4] != 0.0;
  }

  // Per Gaussian: mean_x, mean_y, conic a, b, c, depth, opacity, color rgb.
  constexpr int kScreen = 10;
  std::vector<double> screen(gaussians.size() * kScreen, 0.0);
  std::vector<double> trans = rendering.final_transmittance;
  std::vector<double> behind(5 * npix, 0.0);  // composite of everything behind the current splat
  for (std::uint32_t rank = static_cast<std::uint32_t>(rendering.order.size()); rank-- > 0;) {
    const std::uint32_t id = rendering.order[rank];
    const Projected& p = rendering.projected[id];
    const double opacity = gaussians[id].opacity();
    const Vec3& c = gaussians[id].color;
    const double feat[5] = {c(0), c(1), c(2), p.depth, 1.0};
    double* sg = screen.data() + static_cast<std::size_t>(id) * kScreen;
    const PixelRange range = pixel_range(p, w, h);
    for (int row = range.row0; row <= range.row1; ++row) {
      for (int col = range.col0; col <= range.col1; ++col) {
        const std::size_t pix = static_cast<std::size_t>(row) * w + col;
        if (!active[pix] || rank >= rendering.last_contrib[pix]) continue;
        double q, dx, dy;
        const double a = entry_alpha(p, opacity, col + 0.5, row + 0.5, &q, &dx, &dy);
        if (a == 0.0) continue;
        trans[pix] /= 1.0 - a;  // transmittance in front of this splat
        const double t = trans[pix];
        const double* gp = g.data() + 5 * pix;
        double* bp = behind.data() + 5 * pix;
        double d_alpha = 0.0;
        for (int ch = 0; ch < 5; ++ch) {
          d_alpha += gp[ch] * (feat[ch] - bp[ch]) * t;
          bp[ch] = a * feat[ch] + (1.0 - a) * bp[ch];
        }
        const double wgt = a * t;
        for (int ch = 0; ch < 3; ++ch) sg[7 + ch] += gp[ch] * wgt;
        sg[5] += gp[3] * wgt;
        if (a >= kMaxAlpha) continue;  // clamped: flat in opacity and position
        const double gauss = std::exp(-0.5 * q);
        sg[6] += d_alpha * gauss;
        const double d_q = -0.5 * a * d_alpha;
        sg[0] += -d_q * (2.0 * p.conic_a * dx + 2.0 * p.conic_b * dy);
        sg[1] += -d_q * (2.0 * p.conic_b * dx + 2.0 * p.conic_c * dy);
        sg[2] += d_q * dx * dx;
        sg[3] += d_q * 2.0 * dx * dy;
        sg[4] += d_q * dy * dy;
      }
    }
  }

  std::vector<double> grad(gaussians.size() * kParamsPerGaussian, 0.0);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    if (!rendering.projected[i].visible) continue;
    const double* sg = screen.data() + i * kScreen;
    double* out = grad.data() + i * kParamsPerGaussian;
    for (int ch = 0; ch < 3; ++ch) out[slot::color + ch] = sg[7 + ch];
    const double o = gaussians[i].opacity();
    out[slot::opacity] = sg[6] * o * (1.0 - o);
    bool any = false;
    for (int k = 0; k < 6; ++k) any |= sg[k] != 0.0;
    if (!any) continue;

    const Gaussian3D& gs = gaussians[i];
    AD mu[3], quat[4], ls[3];
    for (int k = 0; k < 3; ++k) mu[k] = AD(gs.position(k), 10, k);
    for (int k = 0; k < 4; ++k) quat[k] = AD(gs.rotation(k), 10, 3 + k);
    for (int k = 0; k < 3; ++k) ls[k] = AD(gs.log_scale(k), 10, 7 + k);
    AD screen_ad[6];
    double extent[2];
    if (!project_impl(mu, quat, ls, cam, screen_ad, extent)) continue;
    Derivs total = Derivs::Zero();
    for (int k = 0; k < 6; ++k) total += sg[k] * screen_ad[k].derivatives();
    for (int k = 0; k < 10; ++k) out[k] = total(k);
  }
  return grad;
}

}  // namespace pano4d::gs
