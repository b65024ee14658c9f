#include "pano4d/cli.hpp"

#include "pano4d/erp_geometry.hpp"
#include "pano4d/gaussian.hpp"
#include "pano4d/gaussian_optimize.hpp"
#include "pano4d/io.hpp"
#include "pano4d/pipeline.hpp"
#include "pano4d/rasterizer.hpp"
#include "pano4d/spatial_alignment.hpp"
#include "pano4d/temporal_alignment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>

namespace pano4d::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool verbose = false;
};

struct Context {
  pipeline::PipelineConfig config;
  int jobs = 1;
  bool verbose = false;
  std::ostream& out;
  std::ostream& err;

  void log(const std::string& msg) const {
    if (verbose) err << msg << "\n";
  }
  void report(const Warnings& w) const {
    for (const auto& m : w.messages) err << "warning: " << m << "\n";
  }
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string numbered(const char* pattern, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, i);
  return buf;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError(p.string(), "no such file");
}

void prepare_output(const Context& ctx, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError(dir.string(), "cannot create output directory");
  io::write_text(dir / "config.json", pipeline::to_json(ctx.config));
}

std::vector<ErpFrame> as_erp(const std::vector<Image>& frames, const fs::path& path) {
  std::vector<ErpFrame> out;
  for (const auto& f : frames) {
    if (f.width() != 2 * f.height()) throw IoError(path.string(), "panorama width must be twice its height");
    out.emplace_back(f);
  }
  return out;
}

json objective_json(const spatial::Objective& o) {
  return {{"depth", o.depth}, {"scale", o.scale}, {"shift", o.shift}, {"total", o.total}};
}

// project <panorama> <out_dir>
int cmd_project(const Context& ctx, const fs::path& pano, const fs::path& out_dir) {
  require_file(pano);
  const std::vector<Image> frames = io::read_frames(pano);
  const std::vector<ErpFrame> erp = as_erp(frames, pano);
  const auto cams = ctx.config.rig.cameras();
  const auto stems = view_stems(cams);
  prepare_output(ctx, out_dir);
  const bool png = pano.extension() == ".png";
  for (std::size_t k = 0; k < cams.size(); ++k) {
    std::vector<Image> views;
    for (const auto& f : erp) views.push_back(erp::project_erp_to_perspective(f, cams[k], erp::Sampling::Bilinear));
    if (png)
      io::write_png(out_dir / (stems[k] + ".png"), views.front());
    else
      io::write_raw_grid(out_dir / (stems[k] + ".grid"), views);
    ctx.log("wrote " + stems[k]);
  }
  io::write_cameras(out_dir / "cameras.json", cams);
  return kExitOk;
}

// align-spatial <view_dir> <out_dir>: view_dir holds cameras.json and one raw
// grid per camera (named by view_stems), each with T single-channel frames.
int cmd_align_spatial(const Context& ctx, const fs::path& in_dir, const fs::path& out_dir) {
  if (!fs::is_directory(in_dir)) throw IoError(in_dir.string(), "no such directory");
  require_file(in_dir / "cameras.json");
  const auto cams = io::read_cameras(in_dir / "cameras.json");
  if (cams.empty()) throw IoError((in_dir / "cameras.json").string(), "no cameras");
  const auto stems = view_stems(cams);
  std::vector<std::vector<Image>> per_view;
  for (const auto& stem : stems) {
    const fs::path p = in_dir / (stem + ".grid");
    require_file(p);
    per_view.push_back(io::read_raw_grid(p));
    if (per_view.back().size() != per_view.front().size())
      throw IoError(p.string(), "frame count differs from the other views");
  }
  const std::size_t frames = per_view.front().size();
  prepare_output(ctx, out_dir);

  const ErpDims dims{ctx.config.fused_height, 2 * ctx.config.fused_height};
  std::vector<Image> fused;
  json report = json::array();
  for (std::size_t t = 0; t < frames; ++t) {
    spatial::TangentDepthSet set;
    set.cameras = cams;
    for (const auto& v : per_view) set.depths.push_back(v[t]);
    Warnings w;
    set.validate(&w);
    const spatial::AlignmentResult res = spatial::align(set, ctx.config.spatial, &w);
    ctx.report(w);
    fused.push_back(spatial::fuse_panorama_depth(set, res.params, res.field, dims));
    json raw = json::array(), eff = json::array();
    for (int k = 0; k < set.count(); ++k) {
      raw.push_back(res.params.raw_scale[static_cast<std::size_t>(k)]);
      eff.push_back(res.params.effective_scale(k));
    }
    report.push_back({{"frame", t},
                      {"alpha_raw", raw},
                      {"alpha_effective", eff},
                      {"iterations", res.trace.empty() ? 0 : res.trace.size() - 1},
                      {"initial", objective_json(res.initial)},
                      {"final", objective_json(res.final)}});
    ctx.log("frame " + std::to_string(t) + ": final L_depth " + fmt_double(res.final.depth));
  }
  io::write_raw_grid(out_dir / "fused_depth.grid", fused);
  io::write_text(out_dir / "alignment.json", json{{"frames", report}}.dump(2) + "\n");
  return kExitOk;
}

// align-temporal <pano_depths> <metric_depths> <poses> <out_dir>
int cmd_align_temporal(const Context& ctx, const fs::path& pano, const fs::path& metric, const fs::path& poses,
                       const fs::path& out_dir) {
  for (const auto& p : {pano, metric, poses}) require_file(p);
  const std::vector<ErpFrame> depths = as_erp(io::read_raw_grid(pano), pano);
  temporal::MetricReference ref;
  ref.depths = io::read_raw_grid(metric);
  ref.poses = io::read_poses(poses);
  prepare_output(ctx, out_dir);
  Warnings w;
  const temporal::AlignedSequence seq = temporal::align_sequence(depths, ref, &w, nullptr, ctx.jobs);
  ctx.report(w);
  std::vector<Image> frames(seq.frames.begin(), seq.frames.end());
  io::write_raw_grid(out_dir / "aligned_depths.grid", frames);
  std::string csv = "t,alpha,beta\n";
  for (std::size_t t = 0; t < seq.calibrations.size(); ++t)
    csv += std::to_string(t) + "," + fmt_double(seq.calibrations[t].alpha) + "," +
           fmt_double(seq.calibrations[t].beta) + "\n";
  io::write_text(out_dir / "calibration.csv", csv);
  return kExitOk;
}

// reconstruct <video> <depths> <poses> <out_dir>
int cmd_reconstruct(const Context& ctx, const fs::path& video_path, const fs::path& depth_path,
                    const fs::path& pose_path, const fs::path& out_dir) {
  for (const auto& p : {video_path, depth_path, pose_path}) require_file(p);
  const std::vector<ErpFrame> video = as_erp(io::read_frames(video_path), video_path);
  const std::vector<ErpFrame> depths = as_erp(io::read_raw_grid(depth_path), depth_path);
  const std::vector<SceneCamera> poses = io::read_poses(pose_path);
  for (const auto& f : video)
    if (f.channels() != 3) throw IoError(video_path.string(), "video frames must be RGB");
  for (std::size_t t = 0; t < depths.size(); ++t) {
    if (depths[t].channels() != 1) throw IoError(depth_path.string(), "depth frames must have one channel");
    for (double d : depths[t].values())
      if (!(d > 0.0) || !std::isfinite(d))
        throw IoError(depth_path.string(), "frame " + std::to_string(t) + " has non-positive or non-finite depth");
  }
  if (video.size() != depths.size() || video.size() != poses.size())
    throw ArgumentError("reconstruct: video, depth and pose files hold different frame counts");
  prepare_output(ctx, out_dir);
  Warnings w;
  const gs::Reconstruction rec = gs::reconstruct_4d(video, depths, poses, ctx.config.reconstruction,
                                                    gs::ReconPlugins::defaults(), &w, ctx.jobs);
  ctx.report(w);
  for (int t = 0; t < rec.scene.frame_count(); ++t) {
    gs::write_ply(out_dir / numbered("frame_%04d.ply", t), rec.scene.frames[static_cast<std::size_t>(t)]);
    std::string csv = "iteration,l1,ssim,lpips,sem,geo,total\n";
    for (const auto& r : rec.traces[static_cast<std::size_t>(t)])
      csv += std::to_string(r.iteration) + "," + fmt_double(r.l1) + "," + fmt_double(r.ssim) + "," +
             fmt_double(r.lpips) + "," + fmt_double(r.sem) + "," + fmt_double(r.geo) + "," + fmt_double(r.total) +
             "\n";
    io::write_text(out_dir / numbered("loss_%04d.csv", t), csv);
    const auto& trace = rec.traces[static_cast<std::size_t>(t)];
    if (!trace.empty())
      ctx.log("frame " + std::to_string(t) + ": loss " + fmt_double(trace.front().total) + " -> " +
              fmt_double(trace.back().total));
  }
  return kExitOk;
}

// Gaussian frame sets frame_0000.ply, frame_0001.ply, ... in a scene directory.
std::vector<gs::GaussianSet> load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "no such directory");
  std::vector<gs::GaussianSet> frames;
  for (int t = 0;; ++t) {
    const fs::path p = dir / numbered("frame_%04d.ply", t);
    if (!fs::exists(p)) break;
    frames.push_back(gs::read_ply(p));
  }
  if (frames.empty()) throw IoError(dir.string(), "no frame_0000.ply");
  return frames;
}

// render <scene_dir> <trajectory> <out_dir>
int cmd_render(const Context& ctx, const fs::path& scene_dir, const fs::path& traj_path, const fs::path& out_dir,
               bool write_depth) {
  require_file(traj_path);
  const auto frames = load_scene(scene_dir);
  const pipeline::TrajectorySpec spec = pipeline::trajectory_from_json(io::read_text(traj_path));
  spec.validate(static_cast<int>(frames.size()));
  const auto steps = pipeline::expand_trajectory(spec, ctx.config.seed);
  prepare_output(ctx, out_dir);
  std::string manifest = "step,frame\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const gs::Rendering r = gs::render(frames[static_cast<std::size_t>(steps[i].frame)], steps[i].camera);
    io::write_png(out_dir / numbered("step_%04d.png", static_cast<int>(i)), r.color);
    if (write_depth) io::write_raw_grid(out_dir / numbered("step_%04d_depth.grid", static_cast<int>(i)), {r.depth});
    manifest += std::to_string(i) + "," + std::to_string(steps[i].frame) + "\n";
  }
  io::write_text(out_dir / "steps.csv", manifest);
  ctx.log("rendered " + std::to_string(steps.size()) + " steps");
  return kExitOk;
}

// export-ply <scene_dir> <out_dir>
int cmd_export_ply(const Context& ctx, const fs::path& scene_dir, const fs::path& out_dir,
                   std::optional<double> prune) {
  const auto frames = load_scene(scene_dir);
  prepare_output(ctx, out_dir);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const gs::GaussianSet set = prune ? gs::prune_by_opacity(frames[t], *prune) : frames[t];
    gs::write_ply(out_dir / numbered("frame_%04d.ply", static_cast<int>(t)), set);
    ctx.log("frame " + std::to_string(t) + ": " + std::to_string(set.size()) + " Gaussians");
  }
  return kExitOk;
}

}  // namespace

std::vector<std::string> view_stems(const std::vector<PerspectiveCamera>& cams) {
  std::vector<std::string> by_azimuth;
  std::set<int> seen;
  bool equatorial = true;
  for (const auto& c : cams) {
    const double deg = rad_to_deg(c.azimuth);
    const double wrapped = deg - 360.0 * std::floor(deg / 360.0);
    const long whole = std::lround(wrapped) % 360;
    if (c.elevation != 0.0 || std::abs(wrapped - std::round(wrapped)) > 1e-9 || !seen.insert(whole).second) {
      equatorial = false;
      break;
    }
    by_azimuth.push_back(numbered("view_%03d", static_cast<int>(whole)));
  }
  if (equatorial) return by_azimuth;
  std::vector<std::string> by_index;
  for (std::size_t k = 0; k < cams.size(); ++k) by_index.push_back(numbered("view_%03d", static_cast<int>(k)));
  return by_index;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Panoramic 4D scene pipeline", "pano4d"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  app.add_option("--seed", g.seed, "seed overriding the configuration");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  std::string a, b, c, d;
  bool write_depth = false;
  std::optional<double> prune;
  auto* project = app.add_subcommand("project", "ERP frames to perspective views");
  project->add_option("panorama", a, "PNG or raw grid")->required();
  project->add_option("out_dir", b)->required();
  auto* align_spatial = app.add_subcommand("align-spatial", "fuse per-view depths into panorama depth");
  align_spatial->add_option("view_dir", a, "cameras.json plus one raw grid per view")->required();
  align_spatial->add_option("out_dir", b)->required();
  auto* align_temporal = app.add_subcommand("align-temporal", "calibrate panorama depths to metric depth");
  align_temporal->add_option("pano_depths", a, "raw grid, T frames")->required();
  align_temporal->add_option("metric_depths", b, "raw grid, T frames")->required();
  align_temporal->add_option("poses", c, "pose JSON")->required();
  align_temporal->add_option("out_dir", d)->required();
  auto* reconstruct = app.add_subcommand("reconstruct", "optimize one Gaussian set per frame");
  reconstruct->add_option("video", a, "PNG or raw grid, RGB")->required();
  reconstruct->add_option("depths", b, "raw grid, T frames")->required();
  reconstruct->add_option("poses", c, "pose JSON")->required();
  reconstruct->add_option("out_dir", d)->required();
  auto* render = app.add_subcommand("render", "render a camera trajectory");
  render->add_option("scene_dir", a, "directory of frame_%04d.ply")->required();
  render->add_option("trajectory", b, "trajectory JSON")->required();
  render->add_option("out_dir", c)->required();
  render->add_flag("--depth", write_depth, "also write raw depth grids");
  auto* export_ply = app.add_subcommand("export-ply", "re-export Gaussian frame sets");
  export_ply->add_option("scene_dir", a)->required();
  export_ply->add_option("out_dir", b)->required();
  export_ply->add_option("--prune", prune, "drop Gaussians below this opacity");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInput;
  }

  try {
    Context ctx{{}, g.jobs, g.verbose, out, err};
    if (!g.config_path.empty()) {
      require_file(g.config_path);
      ctx.config = pipeline::pipeline_config_from_json(io::read_text(g.config_path));
    }
    if (g.seed) {
      ctx.config.seed = *g.seed;
      ctx.config.spatial.seed = *g.seed;
      ctx.config.reconstruction.seed = *g.seed;
    }
    if (*project) return cmd_project(ctx, a, b);
    if (*align_spatial) return cmd_align_spatial(ctx, a, b);
    if (*align_temporal) return cmd_align_temporal(ctx, a, b, c, d);
    if (*reconstruct) return cmd_reconstruct(ctx, a, b, c, d);
    if (*render) return cmd_render(ctx, a, b, c, write_depth);
    if (*export_ply) return cmd_export_ply(ctx, a, b, prune);
    return kExitInput;
  } catch (const OptimizationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace pano4d::cli
