#include "pano4d/gaussian_optimize.hpp"

#include "pano4d/adam.hpp"
#include "pano4d/erp_geometry.hpp"
#include "pano4d/rasterizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace pano4d::gs {

namespace {

void check_weight(double w, const char* name) {
  if (!std::isfinite(w) || w < 0.0) throw ArgumentError(std::string("ReconLossConfig: ") + name + " must be >= 0");
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

// Per-slot learning rates, before the schedule multiplier.
std::vector<double> slot_rates(std::size_t count, const OptimizerSchedule& s, double radius) {
  std::vector<double> rates(count * kParamsPerGaussian);
  for (std::size_t i = 0; i < count; ++i) {
    double* r = rates.data() + i * kParamsPerGaussian;
    for (int k = 0; k < 3; ++k) r[slot::position + k] = s.lr_position * radius;
    for (int k = 0; k < 4; ++k) r[slot::rotation + k] = s.lr_rotation;
    for (int k = 0; k < 3; ++k) r[slot::log_scale + k] = s.lr_log_scale;
    r[slot::opacity] = s.lr_opacity;
    for (int k = 0; k < 3; ++k) r[slot::color + k] = s.lr_color;
  }
  return rates;
}

void project_constraints(std::vector<double>& flat) {
  for (std::size_t i = 0; i < flat.size(); i += kParamsPerGaussian) {
    double* p = flat.data() + i;
    const double n = std::sqrt(p[3] * p[3] + p[4] * p[4] + p[5] * p[5] + p[6] * p[6]);
    if (n > 0.0)
      for (int k = 3; k < 7; ++k) p[k] /= n;
    else
      p[3] = 1.0;
    for (int k = slot::color; k < slot::color + 3; ++k) p[k] = std::clamp(p[k], 0.0, 1.0);
  }
}

void add_into(std::vector<double>& acc, const std::vector<double>& g, double scale = 1.0) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

}  // namespace

ReconLossConfig ReconLossConfig::rescaled(int total) const {
  if (total < 0) throw ArgumentError("ReconLossConfig: iterations must be >= 0");
  ReconLossConfig out = *this;
  if (iterations > 0) {
    const double f = static_cast<double>(total) / iterations;
    out.semantic_start = static_cast<int>(std::lround(semantic_start * f));
    out.semantic_end = static_cast<int>(std::lround(semantic_end * f));
  }
  out.iterations = total;
  return out;
}

void ReconLossConfig::validate() const {
  check_weight(lambda_l1, "lambda_l1");
  check_weight(lambda_ssim, "lambda_ssim");
  check_weight(lambda_lpips, "lambda_lpips");
  check_weight(lambda_sem, "lambda_sem");
  check_weight(lambda_geo, "lambda_geo");
  if (iterations < 0) throw ArgumentError("ReconLossConfig: iterations must be >= 0");
  if (semantic_start < 0 || semantic_end < semantic_start || semantic_end > iterations)
    throw ArgumentError("ReconLossConfig: semantic window must lie within [0, iterations]");
  if (!(perturb_rotation_deg >= 0.0) || !(perturb_translation >= 0.0))
    throw ArgumentError("ReconLossConfig: perturbation magnitudes must be >= 0");
}

double OptimizerSchedule::multiplier(int iteration, int total) const {
  double m = 1.0;
  for (double f : decay_at)
    if (iteration >= f * total) m *= decay_factor;
  return m;
}

void OptimizerSchedule::validate() const {
  for (double lr : {lr_position, lr_rotation, lr_log_scale, lr_opacity, lr_color})
    if (!std::isfinite(lr) || lr < 0.0) throw ArgumentError("OptimizerSchedule: learning rates must be >= 0");
  for (double f : decay_at)
    if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("OptimizerSchedule: decay points must lie in [0, 1]");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ArgumentError("OptimizerSchedule: decay factor in (0, 1]");
}

ReconPlugins ReconPlugins::defaults() {
  static const GradientPyramidMetric perceptual;
  static const PatchMeanExtractor features;
  return {&perceptual, &features};
}

SceneCamera perturb_camera(const SceneCamera& cam, double rotation_deg, double translation, std::mt19937_64& rng) {
  SceneCamera out = cam;
  const Vec3 axis = random_unit(rng);
  const Vec3 shift = random_unit(rng);
  out.rotation = Eigen::AngleAxisd(deg_to_rad(rotation_deg), axis).toRotationMatrix() * cam.rotation;
  out.position = cam.position + translation * shift;
  return out;
}

double scene_radius(const GaussianSet& gaussians, const Vec3& center) {
  if (gaussians.empty()) return 1.0;
  std::vector<double> d;
  d.reserve(gaussians.size());
  for (const auto& g : gaussians) d.push_back((g.position - center).norm());
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>((d.size() - 1) / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

FrameResult optimize_frame(const GaussianSet& init, const std::vector<TrainingView>& views,
                           const ReconLossConfig& cfg, const OptimizerSchedule& schedule, std::uint64_t seed,
                           const ReconPlugins& plugins, Warnings* warnings) {
  cfg.validate();
  schedule.validate();
  if (views.empty()) throw ArgumentError("optimize_frame: at least one training view is required");
  for (const auto& v : views) {
    v.camera.validate();
    if (v.target.height() != v.camera.height || v.target.width() != v.camera.width || v.target.channels() != 3)
      throw ArgumentError("optimize_frame: target does not match its camera");
    if (!v.reference_depth.empty() && (v.reference_depth.height() != v.camera.height ||
                                       v.reference_depth.width() != v.camera.width ||
                                       v.reference_depth.channels() != 1))
      throw ArgumentError("optimize_frame: reference depth does not match its camera");
  }

  FrameResult result;
  result.gaussians = init;
  if (cfg.iterations == 0 || init.empty()) return result;

  Vec3 center = Vec3::Zero();
  for (const auto& v : views) center += v.camera.position;
  center /= static_cast<double>(views.size());
  const double radius = scene_radius(init, center);

  std::vector<double> x = flatten(init);
  const std::vector<double> rates = slot_rates(init.size(), schedule, radius);
  Adam adam(x.size());
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (int it = 0; it < cfg.iterations; ++it) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const TrainingView& view = views[order[cursor++]];
    const GaussianSet gaussians = unflatten(x);
    const Rendering r = render(gaussians, view.camera);

    LossRecord rec;
    rec.iteration = it;
    RenderGradient up;
    const RgbLoss rgb = rgb_loss(r.color, view.target, cfg.rgb_weights(), plugins.perceptual, &up.color);
    rec.l1 = rgb.l1;
    rec.ssim = rgb.ssim;
    rec.lpips = rgb.lpips;
    rec.total = rgb.total;
    if (cfg.lambda_geo > 0.0 && !view.reference_depth.empty()) {
      Image g;
      rec.geo = geometric_loss(r.depth, view.reference_depth, warnings, &g);
      for (double& v : g.values()) v *= cfg.lambda_geo;
      up.depth = std::move(g);
      rec.total += cfg.lambda_geo * rec.geo;
    }
    std::vector<double> grad = render_backward(gaussians, r, up);

    if (cfg.lambda_sem > 0.0 && plugins.features && cfg.semantic_active(it)) {
      const SceneCamera moved =
          perturb_camera(view.camera, cfg.perturb_rotation_deg, cfg.perturb_translation * radius, rng);
      const Rendering rp = render(gaussians, moved);
      RenderGradient ga, gb;
      rec.sem = semantic_loss(r.color, rp.color, *plugins.features, warnings, &ga.color, &gb.color);
      rec.total += cfg.lambda_sem * rec.sem;
      add_into(grad, render_backward(gaussians, r, ga), cfg.lambda_sem);
      add_into(grad, render_backward(gaussians, rp, gb), cfg.lambda_sem);
    }

    if (!std::isfinite(rec.total)) throw OptimizationError(it, "optimize_frame: non-finite loss");
    for (double g : grad)
      if (!std::isfinite(g)) throw OptimizationError(it, "optimize_frame: non-finite gradient");
    result.trace.push_back(rec);

    adam.step(x, grad, schedule.multiplier(it, cfg.iterations), rates);
    project_constraints(x);
  }
  result.gaussians = unflatten(x);
  return result;
}

void ReconstructionConfig::validate() const {
  loss.validate();
  schedule.validate();
  if (views < 1) throw ArgumentError("ReconstructionConfig: views must be >= 1");
  if (view_resolution < 1) throw ArgumentError("ReconstructionConfig: view_resolution must be >= 1");
  if (lift_stride < 1) throw ArgumentError("ReconstructionConfig: lift_stride must be >= 1");
}

std::vector<TrainingView> training_views(const ErpFrame& rgb, const ErpFrame& depth, const SceneCamera& pose,
                                         int views, int resolution, const DepthEstimator* estimator) {
  std::vector<TrainingView> out;
  for (const PerspectiveCamera& view : tangent_rig(views, resolution)) {
    TrainingView tv;
    tv.camera = SceneCamera::from_tangent(view, pose.rotation, pose.position);
    tv.target = erp::project_erp_to_perspective(rgb, view, erp::Sampling::Bilinear);
    if (estimator) {
      tv.reference_depth = estimator->estimate(tv.target);
    } else {
      tv.reference_depth = erp::project_erp_to_perspective(depth, view, erp::Sampling::Bilinear);
      for (int r = 0; r < resolution; ++r)
        for (int c = 0; c < resolution; ++c)
          tv.reference_depth.at(r, c) *= view.pixel_ray(c, r).dot(view.forward());
    }
    out.push_back(std::move(tv));
  }
  return out;
}

Reconstruction reconstruct_4d(const std::vector<ErpFrame>& video, const std::vector<ErpFrame>& depths,
                              const std::vector<SceneCamera>& poses, const ReconstructionConfig& cfg,
                              const ReconPlugins& plugins, Warnings* warnings, int jobs,
                              const DepthEstimator* estimator) {
  cfg.validate();
  if (video.empty()) throw ArgumentError("reconstruct_4d: no frames");
  if (depths.size() != video.size() || poses.size() != video.size())
    throw ArgumentError("reconstruct_4d: frame, depth and pose counts differ");
  if (jobs < 1) throw ArgumentError("reconstruct_4d: jobs must be >= 1");
  for (const auto& p : poses) {
    if (!is_rotation(p.rotation)) throw ArgumentError("reconstruct_4d: pose rotation is not a proper rotation");
    if (!p.position.allFinite()) throw ArgumentError("reconstruct_4d: pose position must be finite");
  }

  const std::size_t n = video.size();
  Reconstruction out;
  out.scene.frames.resize(n);
  out.traces.resize(n);
  std::vector<Warnings> frame_warnings(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n; t = next++) {
      try {
        const GaussianSet init = lift_depth_to_gaussians(video[t], depths[t], cfg.lift_stride, poses[t].rotation,
                                                         poses[t].position);
        const auto views = training_views(video[t], depths[t], poses[t], cfg.views, cfg.view_resolution, estimator);
        FrameResult fr = optimize_frame(init, views, cfg.loss, cfg.schedule, cfg.seed + t, plugins, &frame_warnings[t]);
        out.scene.frames[t] = std::move(fr.gaussians);
        out.traces[t] = std::move(fr.trace);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), n));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (std::size_t t = 0; t < n; ++t) {
    if (errors[t]) std::rethrow_exception(errors[t]);
    for (auto& m : frame_warnings[t].messages) warn(warnings, "frame " + std::to_string(t) + ": " + m);
  }
  return out;
}

}  // namespace pano4d::gs
