#include "pano4d/temporal_alignment.hpp"

#include "pano4d/erp_geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace pano4d::temporal {

void MetricReference::validate() const {
  if (depths.size() != poses.size()) throw ArgumentError("MetricReference: depth/pose count mismatch");
  for (std::size_t t = 0; t < depths.size(); ++t) {
    poses[t].validate();
    if (depths[t].channels() != 1 || depths[t].height() != poses[t].height || depths[t].width() != poses[t].width)
      throw ArgumentError("MetricReference: depth shape does not match pose resolution");
    for (double v : depths[t].values())
      if (!std::isfinite(v) || v <= 0.0) throw ArgumentError("MetricReference: depths must be finite and positive");
  }
}

PerspectiveCamera reference_camera(const SceneCamera& pose) {
  PerspectiveCamera cam{0.0, 0.0, pose.fov, pose.height, pose.width};
  cam.validate();
  return cam;
}

Image center_perspective_depth(const ErpFrame& pano_depth, const PerspectiveCamera& ref_cam) {
  if (pano_depth.channels() != 1) throw ArgumentError("center_perspective_depth: depth must be single-channel");
  return erp::project_erp_to_perspective(pano_depth, ref_cam, erp::Sampling::Bilinear);
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("lower_median: empty input");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

TemporalCalibration calibrate_frame(const Image& d, const Image& d_metric, const Image* mask) {
  if (d.empty() || d_metric.empty()) throw ArgumentError("calibrate_frame: empty depth grid");
  if (!d.same_shape(d_metric)) throw ArgumentError("calibrate_frame: shape mismatch");
  if (mask && !mask->same_shape(d)) throw ArgumentError("calibrate_frame: mask shape mismatch");
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!mask || mask->values()[i] != 0.0) used.push_back(i);
  if (used.empty()) throw ArgumentError("calibrate_frame: mask selects no pixels");

  std::vector<double> ratio;
  ratio.reserve(used.size());
  for (std::size_t i : used) {
    const double di = d.values()[i];
    if (!std::isfinite(di) || di == 0.0) throw ArgumentError("calibrate_frame: depth must be finite and nonzero");
    ratio.push_back(d_metric.values()[i] / di);
  }
  TemporalCalibration cal;
  cal.alpha = lower_median(std::move(ratio));
  std::vector<double> residual;
  residual.reserve(used.size());
  for (std::size_t i : used) residual.push_back(d_metric.values()[i] - cal.alpha * d.values()[i]);
  cal.beta = lower_median(std::move(residual));
  return cal;
}

AlignedSequence align_sequence(const std::vector<ErpFrame>& pano_depths, const MetricReference& ref,
                               Warnings* warnings, const std::vector<Image>* masks, int jobs) {
  ref.validate();
  if (static_cast<int>(pano_depths.size()) != ref.frame_count())
    throw ArgumentError("align_sequence: frame count does not match the metric reference");
  if (masks && masks->size() != pano_depths.size()) throw ArgumentError("align_sequence: mask count mismatch");
  if (jobs < 1) throw ArgumentError("align_sequence: jobs must be >= 1");

  const std::size_t n = pano_depths.size();
  AlignedSequence out;
  out.frames.resize(n);
  out.calibrations.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n; t = next++) {
      try {
        const Image d = center_perspective_depth(pano_depths[t], reference_camera(ref.poses[t]));
        const TemporalCalibration cal = calibrate_frame(d, ref.depths[t], masks ? &(*masks)[t] : nullptr);
        ErpFrame aligned = pano_depths[t];
        for (double& v : aligned.values()) v = cal.alpha * v + cal.beta;
        out.frames[t] = std::move(aligned);
        out.calibrations[t] = cal;
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
    if (!(out.calibrations[t].alpha > 0.0))
      warn(warnings, "align_sequence: frame " + std::to_string(t) + " has non-positive scale " +
                         std::to_string(out.calibrations[t].alpha));
  }
  return out;
}

}  // namespace pano4d::temporal
