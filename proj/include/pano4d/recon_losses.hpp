#pragma once

// Image and depth losses for Gaussian optimization. Every loss can also
// return its gradient with respect to the rendered (first) argument.

#include "pano4d/image.hpp"

#include <span>
#include <vector>

namespace pano4d::gs {

/// Mean absolute difference over all samples.
double l1_loss(const Image& rendered, const Image& target, Image* grad = nullptr);

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5),
/// zero padding, C1 = 0.01^2, C2 = 0.03^2. `grad` receives d SSIM / d rendered.
double ssim(const Image& rendered, const Image& target, Image* grad = nullptr);

/// Perceptual distance, pluggable.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual double distance(const Image& rendered, const Image& target, Image* grad) const = 0;
};

/// Default perceptual distance: mean squared difference of horizontal and
/// vertical image gradients, averaged over three 2x average-pooled levels.
class GradientPyramidMetric final : public PerceptualMetric {
 public:
  double distance(const Image& rendered, const Image& target, Image* grad) const override;
};

/// Image -> fixed-length feature vector, pluggable. `backward` adds the
/// vector-Jacobian product for `grad_features` into `grad_image`.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<double> features(const Image& image) const = 0;
  virtual void backward(const Image& image, std::span<const double> grad_features, Image& grad_image) const = 0;
};

/// Default extractor: per-channel means over 1x1, 2x2 and 4x4 patch grids.
class PatchMeanExtractor final : public FeatureExtractor {
 public:
  std::vector<double> features(const Image& image) const override;
  void backward(const Image& image, std::span<const double> grad_features, Image& grad_image) const override;
};

/// Image -> positive depth grid, pluggable.
class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual Image estimate(const Image& image) const = 0;
};

struct RgbLossWeights {
  double l1 = 0.8;
  double ssim = 0.2;
  double lpips = 0.05;
};

struct RgbLoss {
  double l1 = 0.0;
  double ssim = 0.0;   // 1 - SSIM
  double lpips = 0.0;  // 0 without a perceptual metric
  double total = 0.0;
};

/// l1 * L1 + ssim * (1 - SSIM) + lpips * perceptual.
RgbLoss rgb_loss(const Image& rendered, const Image& target, const RgbLossWeights& weights,
                 const PerceptualMetric* perceptual = nullptr, Image* grad = nullptr);

/// 1 - cos(fx(a), fx(b)), evaluated as |a/|a| - b/|b||^2 / 2. A zero feature
/// vector gives 1 and a warning. Gradients are with respect to both images.
double semantic_loss(const Image& a, const Image& b, const FeatureExtractor& fx, Warnings* warnings = nullptr,
                     Image* grad_a = nullptr, Image* grad_b = nullptr);

/// 1 - Pearson correlation, evaluated as the mean squared difference of the
/// standardized grids over 2. Zero variance in either grid gives 1 and a
/// warning.
double geometric_loss(const Image& rendered_depth, const Image& reference_depth, Warnings* warnings = nullptr,
                      Image* grad = nullptr);

}  // namespace pano4d::gs
