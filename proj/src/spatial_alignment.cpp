#include "pano4d/spatial_alignment.hpp"

#include <ceres/ceres.h>
#include "pano4d/erp_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>

namespace pano4d::spatial {

namespace {

bool footprint_covers(const PerspectiveCamera& cam, const Vec3& dir) {
  const auto p = cam.project(dir);
  if (!p) return false;
  return (*p)(0) >= -0.5 && (*p)(0) < cam.width - 0.5 && (*p)(1) >= -0.5 && (*p)(1) < cam.height - 0.5;
}

void check_shapes(const AlignmentParams& params, const TangentDepthSet& views) {
  const auto k = static_cast<std::size_t>(views.count());
  if (params.raw_scale.size() != k || params.shift.size() != k)
    throw ArgumentError("spatial alignment: parameter count does not match view count");
  for (std::size_t i = 0; i < k; ++i)
    if (!params.shift[i].same_shape(views.depths[i])) throw ArgumentError("spatial alignment: shift grid shape mismatch");
}

// Flat optimizer state: [alpha (K)] [beta (K*h*w)] [theta].
struct Problem {
  const TangentDepthSet& views;
  const SpatialAlignConfig& cfg;
  Matrix encoded;
  Eigen::VectorXd depth;  // observed depths, view-major
  int k = 0;
  std::size_t pixels = 0;  // per view

  Problem(const TangentDepthSet& v, const SpatialAlignConfig& c, int octaves) : views(v), cfg(c) {
    k = v.count();
    pixels = static_cast<std::size_t>(v.height()) * v.width();
    const auto dirs = pixel_directions(v);
    encoded = GeometricField::encode(dirs, octaves);
    depth.resize(static_cast<Eigen::Index>(dirs.size()));
    for (int i = 0; i < k; ++i)
      for (std::size_t p = 0; p < pixels; ++p) depth(static_cast<Eigen::Index>(i * pixels + p)) = v.depths[i].data()[p];
  }

  std::size_t shift_offset() const { return static_cast<std::size_t>(k); }
  std::size_t field_offset() const { return k + k * pixels; }

  Objective evaluate(std::span<const double> x, GeometricField& field, std::span<double> grad) const {
    const int h = views.height();
    const int w = views.width();
    std::copy(x.begin() + field_offset(), x.end(), field.parameters().begin());
    GeometricField::Cache cache;
    const Eigen::VectorXd f = field.forward(encoded, grad.empty() ? nullptr : &cache);

    const double n = static_cast<double>(depth.size());
    Objective obj;
    Eigen::VectorXd residual(depth.size());
    for (int v = 0; v < k; ++v) {
      const double s = softplus(x[v]);
      const double* beta = x.data() + shift_offset() + v * pixels;
      for (std::size_t p = 0; p < pixels; ++p) {
        const auto i = static_cast<Eigen::Index>(v * pixels + p);
        residual(i) = s * depth(i) + beta[p] - f(i);
      }
      obj.scale += (s - 1.0) * (s - 1.0);
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double b = beta[r * w + c];
          if (c + 1 < w) obj.shift += (beta[r * w + c + 1] - b) * (beta[r * w + c + 1] - b);
          if (r + 1 < h) obj.shift += (beta[(r + 1) * w + c] - b) * (beta[(r + 1) * w + c] - b);
        }
    }
    obj.depth = residual.squaredNorm() / n;
    obj.total = obj.depth + cfg.lambda_alpha * obj.scale + cfg.lambda_beta * obj.shift;
    if (grad.empty()) return obj;

    std::fill(grad.begin(), grad.end(), 0.0);
    const Eigen::VectorXd g_res = residual * (2.0 / n);
    for (int v = 0; v < k; ++v) {
      const double s = softplus(x[v]);
      const double ds = sigmoid(x[v]);
      const double* beta = x.data() + shift_offset() + v * pixels;
      double* g_beta = grad.data() + shift_offset() + v * pixels;
      double g_s = 2.0 * cfg.lambda_alpha * (s - 1.0);
      for (std::size_t p = 0; p < pixels; ++p) {
        const auto i = static_cast<Eigen::Index>(v * pixels + p);
        g_s += g_res(i) * depth(i);
        g_beta[p] += g_res(i);
      }
      grad[v] = g_s * ds;
      const double lb2 = 2.0 * cfg.lambda_beta;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const int i = r * w + c;
          if (c + 1 < w) {
            const double d = lb2 * (beta[i + 1] - beta[i]);
            g_beta[i + 1] += d;
            g_beta[i] -= d;
          }
          if (r + 1 < h) {
            const double d = lb2 * (beta[i + w] - beta[i]);
            g_beta[i + w] += d;
            g_beta[i] -= d;
          }
        }
    }
    field.backward(cache, -g_res, grad.subspan(field_offset()));
    return obj;
  }
};

std::vector<double> pack(const AlignmentParams& params, const GeometricField& field) {
  std::vector<double> x(params.raw_scale);
  for (const Image& b : params.shift) x.insert(x.end(), b.values().begin(), b.values().end());
  x.insert(x.end(), field.parameters().begin(), field.parameters().end());
  return x;
}

void unpack(std::span<const double> x, AlignmentParams& params, GeometricField& field) {
  std::size_t o = 0;
  for (double& a : params.raw_scale) a = x[o++];
  for (Image& b : params.shift)
    for (double& v : b.values()) v = x[o++];
  std::copy(x.begin() + static_cast<std::ptrdiff_t>(o), x.end(), field.parameters().begin());
}

class ObjectiveFunction final : public ceres::FirstOrderFunction {
 public:
  ObjectiveFunction(const Problem& problem, const GeometricField& field)
      : problem_(problem), field_(field), grad_(problem.field_offset() + field.parameter_count()) {}

  int NumParameters() const override { return static_cast<int>(grad_.size()); }

  bool Evaluate(const double* x, double* cost, double* gradient) const override {
    const std::span<const double> params(x, grad_.size());
    last = problem_.evaluate(params, field_, gradient ? std::span<double>(grad_) : std::span<double>());
    if (!std::isfinite(last.total)) return false;
    *cost = last.total;
    if (gradient) std::copy(grad_.begin(), grad_.end(), gradient);
    return true;
  }

  mutable Objective last;

 private:
  const Problem& problem_;
  mutable GeometricField field_;
  mutable std::vector<double> grad_;
};

double median_depth(const TangentDepthSet& views, const AlignmentParams& params) {
  std::vector<double> all;
  for (int k = 0; k < views.count(); ++k) {
    const Image c = params.corrected(views, k);
    all.insert(all.end(), c.values().begin(), c.values().end());
  }
  auto mid = all.begin() + static_cast<std::ptrdiff_t>((all.size() - 1) / 2);
  std::nth_element(all.begin(), mid, all.end());
  return *mid;
}

// Per-view scale and constant shift from pairwise overlaps: least squares on
// s_j D_j(p) + b_j = s_k D_k(p') over all pixels seen by two views, with the
// scale prior lambda_alpha * (s - 1)^2. Falls back to the identity when the
// overlaps do not determine a positive scale for every view.
AlignmentParams overlap_initialization(const TangentDepthSet& views, double lambda_alpha) {
  const int k = views.count();
  AlignmentParams params = AlignmentParams::identity(k, views.height(), views.width());
  const int n = 2 * k;
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd row(n);
  std::size_t pairs = 0;
  for (int j = 0; j < k; ++j) {
    const PerspectiveCamera& cj = views.cameras[static_cast<std::size_t>(j)];
    for (int r = 0; r < cj.height; ++r)
      for (int c = 0; c < cj.width; ++c) {
        const Vec3 dir = cj.pixel_ray(c, r);
        for (int i = j + 1; i < k; ++i) {
          const PerspectiveCamera& ci = views.cameras[static_cast<std::size_t>(i)];
          if (!footprint_covers(ci, dir)) continue;
          const Vec2 p = *ci.project(dir);
          double di = 0.0;
          erp::sample_image(views.depths[static_cast<std::size_t>(i)], p(0), p(1), erp::Sampling::Bilinear, &di);
          row.setZero();
          row(j) = views.depths[static_cast<std::size_t>(j)].at(r, c);
          row(i) = -di;
          row(k + j) = 1.0;
          row(k + i) = -1.0;
          normal.noalias() += row * row.transpose();
          ++pairs;
        }
      }
  }
  if (pairs == 0) return params;
  normal /= static_cast<double>(pairs);
  for (int v = 0; v < k; ++v) {
    normal(v, v) += lambda_alpha;
    rhs(v) += lambda_alpha;
    normal(k + v, k + v) += 1e-9;  // pins the common shift, which the overlaps leave free
  }
  const Eigen::VectorXd z = normal.ldlt().solve(rhs);
  for (int v = 0; v < k; ++v)
    if (!(z(v) > 1e-3) || !std::isfinite(z(k + v))) return params;
  for (int v = 0; v < k; ++v) {
    params.raw_scale[static_cast<std::size_t>(v)] = softplus_inverse(z(v));
    for (double& b : params.shift[static_cast<std::size_t>(v)].values()) b = z(k + v);
  }
  return params;
}

}  // namespace

void TangentDepthSet::validate(Warnings* warnings) const {
  if (depths.empty()) throw ArgumentError("TangentDepthSet: at least one view required");
  if (depths.size() != cameras.size()) throw ArgumentError("TangentDepthSet: depth/camera count mismatch");
  for (std::size_t k = 0; k < depths.size(); ++k) {
    const Image& d = depths[k];
    cameras[k].validate();
    if (d.channels() != 1) throw ArgumentError("TangentDepthSet: depth maps must be single-channel");
    if (d.height() != cameras[k].height || d.width() != cameras[k].width)
      throw ArgumentError("TangentDepthSet: depth map does not match camera resolution");
    if (!d.same_shape(depths.front())) throw ArgumentError("TangentDepthSet: all views must share one resolution");
    for (double v : d.values())
      if (!std::isfinite(v) || v <= 0.0) throw ArgumentError("TangentDepthSet: depths must be finite and positive");
  }
  const ErpDims probe{32, 64};
  for (int v = 0; v < probe.height; ++v)
    for (int u = 0; u < probe.width; ++u) {
      const Vec3 dir = erp::dir_for_erp_pixel(probe, u, v);
      if (std::none_of(cameras.begin(), cameras.end(), [&](const auto& c) { return footprint_covers(c, dir); })) {
        warn(warnings, "TangentDepthSet: camera footprints do not cover the whole sphere");
        return;
      }
    }
}

AlignmentParams AlignmentParams::identity(int views, int height, int width) {
  AlignmentParams p;
  p.raw_scale.assign(static_cast<std::size_t>(views), softplus_inverse(1.0));
  p.shift.assign(static_cast<std::size_t>(views), Image(height, width, 1, 0.0));
  return p;
}

Image AlignmentParams::corrected(const TangentDepthSet& views, int k) const {
  const double s = effective_scale(k);
  Image out = views.depths[static_cast<std::size_t>(k)];
  const Image& b = shift[static_cast<std::size_t>(k)];
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = s * out.values()[i] + b.values()[i];
  return out;
}

void SpatialAlignConfig::validate() const {
  if (!(lambda_alpha >= 0.0) || !(lambda_beta >= 0.0)) throw ArgumentError("SpatialAlignConfig: weights must be >= 0");
  if (iterations < 1) throw ArgumentError("SpatialAlignConfig: iterations must be >= 1");
}

std::vector<Vec3> pixel_directions(const TangentDepthSet& views) {
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(views.count()) * views.height() * views.width());
  for (const auto& cam : views.cameras)
    for (int r = 0; r < cam.height; ++r)
      for (int c = 0; c < cam.width; ++c) dirs.push_back(cam.pixel_ray(c, r));
  return dirs;
}

double depth_loss(const AlignmentParams& params, const GeometricField& field, const TangentDepthSet& views) {
  check_shapes(params, views);
  const auto dirs = pixel_directions(views);
  const Eigen::VectorXd f = field.forward(GeometricField::encode(dirs, field.architecture().octaves));
  double sum = 0.0;
  std::size_t i = 0;
  for (int k = 0; k < views.count(); ++k) {
    const Image c = params.corrected(views, k);
    for (double v : c.values()) {
      const double r = v - f(static_cast<Eigen::Index>(i++));
      sum += r * r;
    }
  }
  return sum / static_cast<double>(dirs.size());
}

double scale_reg(const AlignmentParams& params) {
  double sum = 0.0;
  for (double a : params.raw_scale) sum += (softplus(a) - 1.0) * (softplus(a) - 1.0);
  return sum;
}

double shift_smoothness(const AlignmentParams& params) {
  double sum = 0.0;
  for (const Image& b : params.shift)
    for (int r = 0; r < b.height(); ++r)
      for (int c = 0; c < b.width(); ++c) {
        if (c + 1 < b.width()) sum += (b.at(r, c + 1) - b.at(r, c)) * (b.at(r, c + 1) - b.at(r, c));
        if (r + 1 < b.height()) sum += (b.at(r + 1, c) - b.at(r, c)) * (b.at(r + 1, c) - b.at(r, c));
      }
  return sum;
}

Objective alignment_objective(const AlignmentParams& params, const GeometricField& field,
                              const TangentDepthSet& views, const SpatialAlignConfig& cfg) {
  check_shapes(params, views);
  Problem problem(views, cfg, field.architecture().octaves);
  GeometricField scratch = field;
  return problem.evaluate(pack(params, field), scratch, {});
}

AlignmentGradient alignment_gradient(const AlignmentParams& params, const GeometricField& field,
                                     const TangentDepthSet& views, const SpatialAlignConfig& cfg) {
  check_shapes(params, views);
  Problem problem(views, cfg, field.architecture().octaves);
  GeometricField scratch = field;
  const auto x = pack(params, field);
  std::vector<double> g(x.size());
  problem.evaluate(x, scratch, g);

  AlignmentGradient out;
  AlignmentParams shaped = params;
  unpack(g, shaped, scratch);
  out.raw_scale = shaped.raw_scale;
  out.shift = shaped.shift;
  out.field.assign(scratch.parameters().begin(), scratch.parameters().end());
  return out;
}

AlignmentResult align(const TangentDepthSet& views, const SpatialAlignConfig& cfg, Warnings* warnings) {
  views.validate(warnings);
  cfg.validate();

  std::mt19937_64 rng(cfg.seed);
  AlignmentResult result;
  result.params = overlap_initialization(views, cfg.lambda_alpha);
  result.field = GeometricField(cfg.field, rng, median_depth(views, result.params));

  const Problem problem(views, cfg, cfg.field.octaves);
  std::vector<double> x = pack(result.params, result.field);
  auto* fn = new ObjectiveFunction(problem, result.field);
  double cost = 0.0;
  if (!fn->Evaluate(x.data(), &cost, nullptr)) {
    delete fn;
    throw OptimizationError(0, "spatial alignment objective is not finite");
  }
  result.initial = fn->last;
  const ceres::GradientProblem gradient_problem(fn);

  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.line_search_type = ceres::WOLFE;
  options.max_num_iterations = cfg.iterations;
  options.function_tolerance = 0.0;
  options.gradient_tolerance = 0.0;
  options.parameter_tolerance = 0.0;
  options.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, gradient_problem, x.data(), &summary);

  for (const auto& it : summary.iterations) {
    if (!std::isfinite(it.cost)) throw OptimizationError(it.iteration, "spatial alignment objective is not finite");
    result.trace.push_back(it.cost);
  }
  GeometricField scratch = result.field;
  result.final = problem.evaluate(x, scratch, {});
  if (!std::isfinite(result.final.total))
    throw OptimizationError(static_cast<int>(summary.iterations.size()), "spatial alignment objective is not finite");
  unpack(x, result.params, result.field);
  return result;
}

ErpFrame fuse_panorama_depth(const TangentDepthSet& views, const AlignmentParams& params, const GeometricField& field,
                             ErpDims dst) {
  check_shapes(params, views);
  if (dst.height < 1 || dst.width != 2 * dst.height) throw ArgumentError("fuse_panorama_depth: bad ERP dimensions");
  std::vector<Image> corrected;
  for (int k = 0; k < views.count(); ++k) corrected.push_back(params.corrected(views, k));

  ErpFrame out(dst.height, 1);
  std::vector<Vec3> missing_dirs;
  std::vector<std::size_t> missing;
  for (int v = 0; v < dst.height; ++v)
    for (int u = 0; u < dst.width; ++u) {
      const Vec3 dir = erp::dir_for_erp_pixel(dst, u, v);
      int count = 0;
      double single = 0.0;
      double weight_sum = 0.0;
      double edge_sum = 0.0;
      double plain_sum = 0.0;
      for (int k = 0; k < views.count(); ++k) {
        const PerspectiveCamera& cam = views.cameras[static_cast<std::size_t>(k)];
        if (!footprint_covers(cam, dir)) continue;
        const Vec2 p = *cam.project(dir);
        double c = 0.0;
        erp::sample_image(corrected[static_cast<std::size_t>(k)], p(0), p(1), erp::Sampling::Bilinear, &c);
        if (!(c > 0.0)) continue;
        const double edge = std::min({p(0) + 0.5, cam.width - 0.5 - p(0), p(1) + 0.5, cam.height - 0.5 - p(1)}) /
                            (0.5 * cam.width);
        ++count;
        single = c;
        plain_sum += c;
        edge_sum += edge;
        weight_sum += edge / c;
      }
      if (count == 1) {
        out.at(v, u) = single;
      } else if (count > 1) {
        // weights edge/c applied to values c: sum(edge) / sum(edge / c)
        out.at(v, u) = weight_sum > 0.0 ? edge_sum / weight_sum : plain_sum / count;
      } else {
        missing.push_back(out.index(v, u));
        missing_dirs.push_back(dir);
      }
    }
  if (!missing.empty()) {
    const Eigen::VectorXd f = field.forward(GeometricField::encode(missing_dirs, field.architecture().octaves));
    for (std::size_t i = 0; i < missing.size(); ++i) out.values()[missing[i]] = f(static_cast<Eigen::Index>(i));
  }
  return out;
}

}  // namespace pano4d::spatial
