#include "pano4d/pipeline.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <set>

namespace pano4d::pipeline {

using nlohmann::json;

namespace {

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected a JSON object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      ok = v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else {
      ok = true;
    }
    if (!ok) fail(std::string("'") + key + "' has the wrong type");
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      fail(std::string("'") + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail("unknown key '" + key + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ArgumentError(where_ + ": " + what); }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("invalid JSON: ") + e.what());
  }
}

json loss_json(const gs::ReconLossConfig& c) {
  return {{"lambda_l1", c.lambda_l1},
          {"lambda_ssim", c.lambda_ssim},
          {"lambda_lpips", c.lambda_lpips},
          {"lambda_sem", c.lambda_sem},
          {"lambda_geo", c.lambda_geo},
          {"semantic_window", {c.semantic_start, c.semantic_end}},
          {"iterations", c.iterations},
          {"perturb_rotation_deg", c.perturb_rotation_deg},
          {"perturb_translation", c.perturb_translation}};
}

gs::ReconLossConfig loss_from(const json& j, const std::string& where) {
  gs::ReconLossConfig c;
  ObjectReader r(j, where);
  r.read("lambda_l1", c.lambda_l1);
  r.read("lambda_ssim", c.lambda_ssim);
  r.read("lambda_lpips", c.lambda_lpips);
  r.read("lambda_sem", c.lambda_sem);
  r.read("lambda_geo", c.lambda_geo);
  if (const json* w = r.child("semantic_window")) {
    if (!w->is_array() || w->size() != 2 || !(*w)[0].is_number_integer() || !(*w)[1].is_number_integer())
      r.fail("'semantic_window' must be [start, end]");
    c.semantic_start = (*w)[0].get<int>();
    c.semantic_end = (*w)[1].get<int>();
  }
  r.read("iterations", c.iterations);
  r.read("perturb_rotation_deg", c.perturb_rotation_deg);
  r.read("perturb_translation", c.perturb_translation);
  r.finish();
  return c;
}

json schedule_json(const gs::OptimizerSchedule& s) {
  return {{"lr_position", s.lr_position}, {"lr_rotation", s.lr_rotation}, {"lr_log_scale", s.lr_log_scale},
          {"lr_opacity", s.lr_opacity},   {"lr_color", s.lr_color},       {"decay_at", s.decay_at},
          {"decay_factor", s.decay_factor}};
}

gs::OptimizerSchedule schedule_from(const json& j, const std::string& where) {
  gs::OptimizerSchedule s;
  ObjectReader r(j, where);
  r.read("lr_position", s.lr_position);
  r.read("lr_rotation", s.lr_rotation);
  r.read("lr_log_scale", s.lr_log_scale);
  r.read("lr_opacity", s.lr_opacity);
  r.read("lr_color", s.lr_color);
  if (const json* d = r.child("decay_at")) {
    if (!d->is_array()) r.fail("'decay_at' must be an array of numbers");
    s.decay_at.clear();
    for (const auto& v : *d) {
      if (!v.is_number()) r.fail("'decay_at' must be an array of numbers");
      s.decay_at.push_back(v.get<double>());
    }
  }
  r.read("decay_factor", s.decay_factor);
  r.finish();
  return s;
}

json spatial_json(const spatial::SpatialAlignConfig& c) {
  return {{"lambda_alpha", c.lambda_alpha},
          {"lambda_beta", c.lambda_beta},
          {"iterations", c.iterations},
          {"field",
           {{"hidden_layers", c.field.hidden_layers},
            {"width", c.field.width},
            {"octaves", c.field.octaves},
            {"activation", c.field.activation == spatial::Activation::SiLU ? "silu" : "relu"}}}};
}

spatial::SpatialAlignConfig spatial_from(const json& j, const std::string& where) {
  spatial::SpatialAlignConfig c;
  ObjectReader r(j, where);
  r.read("lambda_alpha", c.lambda_alpha);
  r.read("lambda_beta", c.lambda_beta);
  r.read("iterations", c.iterations);
  if (const json* f = r.child("field")) {
    ObjectReader fr(*f, r.path("field"));
    fr.read("hidden_layers", c.field.hidden_layers);
    fr.read("width", c.field.width);
    fr.read("octaves", c.field.octaves);
    std::string act = c.field.activation == spatial::Activation::SiLU ? "silu" : "relu";
    fr.read("activation", act);
    if (act == "silu")
      c.field.activation = spatial::Activation::SiLU;
    else if (act == "relu")
      c.field.activation = spatial::Activation::ReLU;
    else
      fr.fail("'activation' must be \"silu\" or \"relu\"");
    fr.finish();
  }
  r.finish();
  return c;
}

json camera_json(const SceneCamera& c) {
  json rot = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(i, k));
  return {{"R", rot},
          {"t", {c.position.x(), c.position.y(), c.position.z()}},
          {"fov_deg", rad_to_deg(c.fov)},
          {"h", c.height},
          {"w", c.width}};
}

void read_numbers(ObjectReader& r, const char* key, double* out, std::size_t n) {
  const json* a = r.child(key);
  if (!a) r.fail(std::string("missing '") + key + "'");
  if (!a->is_array() || a->size() != n) r.fail(std::string("'") + key + "' must hold " + std::to_string(n) + " numbers");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(*a)[i].is_number()) r.fail(std::string("'") + key + "' must hold numbers");
    out[i] = (*a)[i].get<double>();
  }
}

}  // namespace

std::vector<PerspectiveCamera> RigConfig::cameras() const {
  validate();
  return views == 4 ? ViewRig::standard(resolution).cameras : tangent_rig(views, resolution);
}

void RigConfig::validate() const {
  if (views < 1) throw ArgumentError("rig: views must be >= 1");
  if (resolution < 1) throw ArgumentError("rig: resolution must be >= 1");
}

void PipelineConfig::validate() const {
  rig.validate();
  spatial.validate();
  if (fused_height < 2) throw ArgumentError("fused_height must be >= 2");
  if (spatial.field.hidden_layers < 1 || spatial.field.width < 1 || spatial.field.octaves < 0)
    throw ArgumentError("spatial.field: layers and width must be >= 1, octaves >= 0");
  reconstruction.validate();
}

std::string to_json(const gs::ReconLossConfig& cfg) { return loss_json(cfg).dump(2) + "\n"; }

std::string to_json(const PipelineConfig& cfg) {
  const auto& rc = cfg.reconstruction;
  const json j = {{"seed", cfg.seed},
                  {"rig", {{"views", cfg.rig.views}, {"resolution", cfg.rig.resolution}}},
                  {"spatial", spatial_json(cfg.spatial)},
                  {"fused_height", cfg.fused_height},
                  {"reconstruction",
                   {{"views", rc.views},
                    {"view_resolution", rc.view_resolution},
                    {"lift_stride", rc.lift_stride},
                    {"loss", loss_json(rc.loss)},
                    {"schedule", schedule_json(rc.schedule)}}}};
  return j.dump(2) + "\n";
}

gs::ReconLossConfig recon_loss_config_from_json(const std::string& text) {
  gs::ReconLossConfig c = loss_from(parse(text), "loss");
  c.validate();
  return c;
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
  const json j = parse(text);
  PipelineConfig c;
  ObjectReader r(j, "config");
  r.read("seed", c.seed);
  if (const json* rig = r.child("rig")) {
    ObjectReader rr(*rig, r.path("rig"));
    rr.read("views", c.rig.views);
    rr.read("resolution", c.rig.resolution);
    rr.finish();
  }
  if (const json* s = r.child("spatial")) c.spatial = spatial_from(*s, r.path("spatial"));
  r.read("fused_height", c.fused_height);
  if (const json* rec = r.child("reconstruction")) {
    ObjectReader rr(*rec, r.path("reconstruction"));
    rr.read("views", c.reconstruction.views);
    rr.read("view_resolution", c.reconstruction.view_resolution);
    rr.read("lift_stride", c.reconstruction.lift_stride);
    if (const json* l = rr.child("loss")) c.reconstruction.loss = loss_from(*l, rr.path("loss"));
    if (const json* s = rr.child("schedule")) c.reconstruction.schedule = schedule_from(*s, rr.path("schedule"));
    rr.finish();
  }
  r.finish();
  c.spatial.seed = c.seed;
  c.reconstruction.seed = c.seed;
  c.validate();
  return c;
}

void TrajectorySpec::validate(int frame_count) const {
  if (keyframes.empty()) throw ArgumentError("trajectory: at least one keyframe is required");
  if (steps_per_segment < 1) throw ArgumentError("trajectory: steps_per_segment must be >= 1");
  if (!(perturb_rotation_deg >= 0.0) || !(perturb_translation >= 0.0))
    throw ArgumentError("trajectory: perturbation magnitudes must be >= 0");
  for (const auto& k : keyframes) {
    k.camera.validate();
    if (!is_rotation(k.camera.rotation)) throw ArgumentError("trajectory: keyframe rotation is not a rotation");
    if (!k.camera.position.allFinite()) throw ArgumentError("trajectory: keyframe position must be finite");
    if (k.camera.height != keyframes[0].camera.height || k.camera.width != keyframes[0].camera.width)
      throw ArgumentError("trajectory: keyframes must share one resolution");
    if (k.frame < 0 || (frame_count >= 0 && k.frame >= frame_count))
      throw ArgumentError("trajectory: keyframe frame " + std::to_string(k.frame) + " is out of range");
  }
}

std::vector<TrajectoryStep> expand_trajectory(const TrajectorySpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto& keys = spec.keyframes;
  std::vector<TrajectoryStep> steps;
  if (keys.size() == 1) {
    steps.push_back({keys[0].camera, keys[0].frame});
  } else {
    const int m = spec.steps_per_segment;
    const int total = static_cast<int>(keys.size() - 1) * m + 1;
    for (int j = 0; j < total; ++j) {
      const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(j / m), keys.size() - 2);
      const double s = static_cast<double>(j - static_cast<int>(k) * m) / m;
      const SceneCamera& a = keys[k].camera;
      const SceneCamera& b = keys[k + 1].camera;
      SceneCamera cam = a;
      cam.position = (1.0 - s) * a.position + s * b.position;
      cam.fov = (1.0 - s) * a.fov + s * b.fov;
      const Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
      cam.rotation = qa.slerp(s, qb).normalized().toRotationMatrix();
      steps.push_back({cam, s <= 0.5 ? keys[k].frame : keys[k + 1].frame});
    }
  }
  if (spec.perturb_rotation_deg > 0.0 || spec.perturb_translation > 0.0) {
    std::mt19937_64 rng(seed);
    for (auto& st : steps)
      st.camera = gs::perturb_camera(st.camera, spec.perturb_rotation_deg, spec.perturb_translation, rng);
  }
  return steps;
}

std::string to_json(const TrajectorySpec& spec) {
  json keys = json::array();
  for (const auto& k : spec.keyframes) {
    json e = camera_json(k.camera);
    e["frame"] = k.frame;
    keys.push_back(e);
  }
  const json j = {{"keyframes", keys},
                  {"steps_per_segment", spec.steps_per_segment},
                  {"perturb_rotation_deg", spec.perturb_rotation_deg},
                  {"perturb_translation", spec.perturb_translation}};
  return j.dump(2) + "\n";
}

TrajectorySpec trajectory_from_json(const std::string& text) {
  const json j = parse(text);
  TrajectorySpec spec;
  ObjectReader r(j, "trajectory");
  if (const json* keys = r.child("keyframes")) {
    if (!keys->is_array()) r.fail("'keyframes' must be an array");
    for (std::size_t i = 0; i < keys->size(); ++i) {
      ObjectReader kr((*keys)[i], r.path("keyframes") + "[" + std::to_string(i) + "]");
      Keyframe k;
      double rot[9], t[3];
      read_numbers(kr, "R", rot, 9);
      read_numbers(kr, "t", t, 3);
      for (int e = 0; e < 9; ++e) k.camera.rotation(e / 3, e % 3) = rot[e];
      k.camera.position = Vec3(t[0], t[1], t[2]);
      double fov_deg = rad_to_deg(k.camera.fov);
      kr.read("fov_deg", fov_deg);
      k.camera.fov = deg_to_rad(fov_deg);
      kr.read("h", k.camera.height);
      kr.read("w", k.camera.width);
      kr.read("frame", k.frame);
      kr.finish();
      spec.keyframes.push_back(k);
    }
  }
  r.read("steps_per_segment", spec.steps_per_segment);
  r.read("perturb_rotation_deg", spec.perturb_rotation_deg);
  r.read("perturb_translation", spec.perturb_translation);
  r.finish();
  spec.validate();
  return spec;
}

}  // namespace pano4d::pipeline
