#include "pano4d/recon_losses.hpp"

#include <array>
#include <cmath>

namespace pano4d::gs {

namespace {

void require_same(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) throw ArgumentError(std::string(who) + ": shape mismatch");
  if (a.empty()) throw ArgumentError(std::string(who) + ": empty image");
}

void reset_grad(Image* grad, const Image& like) {
  if (grad) *grad = Image(like.height(), like.width(), like.channels());
}

constexpr int kSsimRadius = 5;

std::array<double, 2 * kSsimRadius + 1> ssim_kernel() {
  std::array<double, 2 * kSsimRadius + 1> k{};
  double sum = 0.0;
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
    k[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    sum += k[static_cast<std::size_t>(i + kSsimRadius)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Same-size separable Gaussian blur with zero padding; symmetric kernel, so
// the operator is its own adjoint.
using Plane = std::vector<double>;

Plane blur(const Plane& in, int h, int w) {
  static const auto k = ssim_kernel();
  Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int cc = c + d;
        if (cc >= 0 && cc < w) s += k[static_cast<std::size_t>(d + kSsimRadius)] * in[static_cast<std::size_t>(r) * w + cc];
      }
      tmp[static_cast<std::size_t>(r) * w + c] = s;
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int d = -kSsimRadius; d <= kSsimRadius; ++d) {
        const int rr = r + d;
        if (rr >= 0 && rr < h) s += k[static_cast<std::size_t>(d + kSsimRadius)] * tmp[static_cast<std::size_t>(rr) * w + c];
      }
      out[static_cast<std::size_t>(r) * w + c] = s;
    }
  return out;
}

Plane channel(const Image& im, int ch) {
  Plane p(im.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = im.values()[i * im.channels() + ch];
  return p;
}

// 2x average pooling, dropping an odd last row/column.
Image pool2(const Image& im) {
  Image out(im.height() / 2, im.width() / 2, im.channels());
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c)
      for (int ch = 0; ch < im.channels(); ++ch)
        out.at(r, c, ch) = 0.25 * (im.at(2 * r, 2 * c, ch) + im.at(2 * r, 2 * c + 1, ch) + im.at(2 * r + 1, 2 * c, ch) +
                                   im.at(2 * r + 1, 2 * c + 1, ch));
  return out;
}

void unpool2_add(const Image& g, Image& fine) {
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c)
      for (int ch = 0; ch < g.channels(); ++ch) {
        const double v = 0.25 * g.at(r, c, ch);
        fine.at(2 * r, 2 * c, ch) += v;
        fine.at(2 * r, 2 * c + 1, ch) += v;
        fine.at(2 * r + 1, 2 * c, ch) += v;
        fine.at(2 * r + 1, 2 * c + 1, ch) += v;
      }
}

constexpr int kPyramidLevels = 3;
constexpr int kPatchGrids[] = {1, 2, 4};

}  // namespace

double l1_loss(const Image& rendered, const Image& target, Image* grad) {
  require_same(rendered, target, "l1_loss");
  reset_grad(grad, rendered);
  const double n = static_cast<double>(rendered.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double d = rendered.values()[i] - target.values()[i];
    sum += std::abs(d);
    if (grad) grad->values()[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  return sum / n;
}

double ssim(const Image& rendered, const Image& target, Image* grad) {
  require_same(rendered, target, "ssim");
  reset_grad(grad, rendered);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int h = rendered.height();
  const int w = rendered.width();
  const std::size_t np = rendered.pixel_count();
  const double inv_n = 1.0 / static_cast<double>(rendered.size());
  double total = 0.0;
  for (int ch = 0; ch < rendered.channels(); ++ch) {
    const Plane x = channel(rendered, ch);
    const Plane y = channel(target, ch);
    Plane xx(np), yy(np), xy(np);
    for (std::size_t i = 0; i < np; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const Plane mx = blur(x, h, w), my = blur(y, h, w);
    const Plane exx = blur(xx, h, w), eyy = blur(yy, h, w), exy = blur(xy, h, w);
    Plane dm(grad ? np : 0), de(grad ? np : 0), dp(grad ? np : 0);
    for (std::size_t i = 0; i < np; ++i) {
      const double a1 = 2.0 * mx[i] * my[i] + c1;
      const double a2 = 2.0 * (exy[i] - mx[i] * my[i]) + c2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
      const double b2 = (exx[i] - mx[i] * mx[i]) + (eyy[i] - my[i] * my[i]) + c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad) {
        dm[i] = inv_n * (2.0 * my[i] * (a2 - a1) / (b1 * b2) - 2.0 * mx[i] * s * (1.0 / b1 - 1.0 / b2));
        de[i] = inv_n * (-s / b2);
        dp[i] = inv_n * (2.0 * a1 / (b1 * b2));
      }
    }
    if (grad) {
      const Plane gm = blur(dm, h, w), ge = blur(de, h, w), gp = blur(dp, h, w);
      for (std::size_t i = 0; i < np; ++i)
        grad->values()[i * rendered.channels() + ch] = gm[i] + 2.0 * x[i] * ge[i] + y[i] * gp[i];
    }
  }
  return total / static_cast<double>(rendered.size());
}

double GradientPyramidMetric::distance(const Image& rendered, const Image& target, Image* grad) const {
  require_same(rendered, target, "GradientPyramidMetric");
  reset_grad(grad, rendered);
  std::vector<Image> diffs;
  Image d(rendered.height(), rendered.width(), rendered.channels());
  for (std::size_t i = 0; i < d.size(); ++i) d.values()[i] = rendered.values()[i] - target.values()[i];
  diffs.push_back(d);
  for (int l = 1; l < kPyramidLevels; ++l) diffs.push_back(pool2(diffs.back()));

  double total = 0.0;
  std::vector<Image> level_grads;
  int levels = 0;
  for (const Image& dl : diffs) {
    const int h = dl.height(), w = dl.width(), c = dl.channels();
    Image g(h, w, c);
    if (h < 2 || w < 2) {
      level_grads.push_back(g);
      continue;
    }
    ++levels;
    const double nx = static_cast<double>(h) * (w - 1) * c;
    const double ny = static_cast<double>(h - 1) * w * c;
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col)
        for (int ch = 0; ch < c; ++ch) {
          if (col + 1 < w) {
            const double gx = dl.at(r, col + 1, ch) - dl.at(r, col, ch);
            total += gx * gx / nx;
            g.at(r, col + 1, ch) += 2.0 * gx / nx;
            g.at(r, col, ch) -= 2.0 * gx / nx;
          }
          if (r + 1 < h) {
            const double gy = dl.at(r + 1, col, ch) - dl.at(r, col, ch);
            total += gy * gy / ny;
            g.at(r + 1, col, ch) += 2.0 * gy / ny;
            g.at(r, col, ch) -= 2.0 * gy / ny;
          }
        }
    level_grads.push_back(g);
  }
  if (levels == 0) return 0.0;
  if (grad) {
    // Coarse to fine: push each level's gradient down through the pooling.
    for (int l = static_cast<int>(level_grads.size()) - 1; l > 0; --l)
      unpool2_add(level_grads[static_cast<std::size_t>(l)], level_grads[static_cast<std::size_t>(l - 1)]);
    for (std::size_t i = 0; i < grad->size(); ++i) grad->values()[i] = level_grads[0].values()[i] / levels;
  }
  return total / levels;
}

std::vector<double> PatchMeanExtractor::features(const Image& image) const {
  if (image.empty()) throw ArgumentError("PatchMeanExtractor: empty image");
  const int h = image.height(), w = image.width(), c = image.channels();
  std::vector<double> out;
  for (int n : kPatchGrids) {
    const std::size_t base = out.size();
    out.resize(base + static_cast<std::size_t>(n * n * c), 0.0);
    std::vector<int> count(static_cast<std::size_t>(n * n), 0);
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        const int p = (r * n / h) * n + col * n / w;
        ++count[static_cast<std::size_t>(p)];
        for (int ch = 0; ch < c; ++ch) out[base + static_cast<std::size_t>(p * c + ch)] += image.at(r, col, ch);
      }
    for (int p = 0; p < n * n; ++p)
      for (int ch = 0; ch < c; ++ch)
        if (count[static_cast<std::size_t>(p)] > 0)
          out[base + static_cast<std::size_t>(p * c + ch)] /= count[static_cast<std::size_t>(p)];
  }
  return out;
}

void PatchMeanExtractor::backward(const Image& image, std::span<const double> grad_features, Image& grad_image) const {
  const int h = image.height(), w = image.width(), c = image.channels();
  if (!grad_image.same_shape(image)) grad_image = Image(h, w, c);
  std::size_t base = 0;
  for (int n : kPatchGrids) {
    std::vector<int> count(static_cast<std::size_t>(n * n), 0);
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) ++count[static_cast<std::size_t>((r * n / h) * n + col * n / w)];
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col) {
        const int p = (r * n / h) * n + col * n / w;
        for (int ch = 0; ch < c; ++ch)
          grad_image.at(r, col, ch) +=
              grad_features[base + static_cast<std::size_t>(p * c + ch)] / count[static_cast<std::size_t>(p)];
      }
    base += static_cast<std::size_t>(n * n * c);
  }
}

RgbLoss rgb_loss(const Image& rendered, const Image& target, const RgbLossWeights& weights,
                 const PerceptualMetric* perceptual, Image* grad) {
  require_same(rendered, target, "rgb_loss");
  RgbLoss out;
  Image g1, gs, gp;
  out.l1 = l1_loss(rendered, target, grad ? &g1 : nullptr);
  out.ssim = 1.0 - ssim(rendered, target, grad ? &gs : nullptr);
  if (perceptual) out.lpips = perceptual->distance(rendered, target, grad ? &gp : nullptr);
  out.total = weights.l1 * out.l1 + weights.ssim * out.ssim + weights.lpips * out.lpips;
  if (grad) {
    *grad = Image(rendered.height(), rendered.width(), rendered.channels());
    for (std::size_t i = 0; i < grad->size(); ++i) {
      double v = weights.l1 * g1.values()[i] - weights.ssim * gs.values()[i];
      if (perceptual) v += weights.lpips * gp.values()[i];
      grad->values()[i] = v;
    }
  }
  return out;
}

double semantic_loss(const Image& a, const Image& b, const FeatureExtractor& fx, Warnings* warnings, Image* grad_a,
                     Image* grad_b) {
  reset_grad(grad_a, a);
  reset_grad(grad_b, b);
  const std::vector<double> fa = fx.features(a);
  const std::vector<double> fb = fx.features(b);
  if (fa.size() != fb.size()) throw ArgumentError("semantic_loss: feature dimensions differ");
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    na += fa[i] * fa[i];
    nb += fb[i] * fb[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) {
    warn(warnings, "semantic_loss: zero-norm feature vector, loss set to 1");
    return 1.0;
  }
  double loss = 0.0, cos = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const double d = fa[i] / na - fb[i] / nb;
    loss += 0.5 * d * d;
    cos += (fa[i] / na) * (fb[i] / nb);
  }
  if (grad_a || grad_b) {
    std::vector<double> ga(fa.size()), gb(fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      const double ua = fa[i] / na, ub = fb[i] / nb;
      ga[i] = -(ub - cos * ua) / na;
      gb[i] = -(ua - cos * ub) / nb;
    }
    if (grad_a) fx.backward(a, ga, *grad_a);
    if (grad_b) fx.backward(b, gb, *grad_b);
  }
  return loss;
}

double geometric_loss(const Image& rendered_depth, const Image& reference_depth, Warnings* warnings, Image* grad) {
  require_same(rendered_depth, reference_depth, "geometric_loss");
  reset_grad(grad, rendered_depth);
  const std::vector<double>& x = rendered_depth.values();
  const std::vector<double>& y = reference_depth.values();
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  vx /= n;
  vy /= n;
  if (vx == 0.0 || vy == 0.0) {
    warn(warnings, "geometric_loss: zero-variance depth grid, loss set to 1");
    return 1.0;
  }
  const double sx = std::sqrt(vx), sy = std::sqrt(vy);
  double loss = 0.0, rho = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double zx = (x[i] - mx) / sx, zy = (y[i] - my) / sy;
    loss += 0.5 * (zx - zy) * (zx - zy);
    rho += zx * zy;
  }
  loss /= n;
  rho /= n;
  if (grad)
    for (std::size_t i = 0; i < x.size(); ++i)
      grad->values()[i] = -((y[i] - my) / (n * sx * sy) - rho * (x[i] - mx) / (n * vx));
  return loss;
}

}  // namespace pano4d::gs
