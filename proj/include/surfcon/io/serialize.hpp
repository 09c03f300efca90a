#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "surfcon/camera.hpp"
#include "surfcon/mv_loss.hpp"
#include "surfcon/optim.hpp"
#include "surfcon/sv_loss.hpp"
#include "surfcon/synth.hpp"

namespace surfcon::io {

using json = nlohmann::ordered_json;

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw InputError(what + " must be a JSON object");
}

/// Rejects keys outside `allowed` so that typos surface as errors.
inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& what) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw InputError("unknown key '" + k + "' in " + what);
  }
}

inline json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec3(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError(what + " must be a 3-element array");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    throw InputError(what + " must contain numbers");
  }
}

}  // namespace detail

inline json to_json(const SvConfig& c) {
  return {{"lambda1", c.lambda1}, {"lambda2", c.lambda2}, {"theta", c.theta}, {"percentile", c.percentile}};
}

inline void from_json(const json& j, SvConfig& c) {
  detail::require_object(j, "sv config");
  detail::check_keys(j, {"lambda1", "lambda2", "theta", "percentile"}, "sv config");
  detail::read_opt(j, "lambda1", c.lambda1);
  detail::read_opt(j, "lambda2", c.lambda2);
  detail::read_opt(j, "theta", c.theta);
  detail::read_opt(j, "percentile", c.percentile);
}

inline json to_json(const MvConfig& c) {
  return {{"beta", c.beta}, {"eps_d", c.eps_d}, {"gamma_fraction", c.gamma_fraction}, {"S", c.samples},
          {"lambda3", c.lambda3}};
}

inline void from_json(const json& j, MvConfig& c) {
  detail::require_object(j, "mv config");
  detail::check_keys(j, {"beta", "eps_d", "gamma_fraction", "S", "lambda3"}, "mv config");
  detail::read_opt(j, "beta", c.beta);
  detail::read_opt(j, "eps_d", c.eps_d);
  detail::read_opt(j, "gamma_fraction", c.gamma_fraction);
  detail::read_opt(j, "S", c.samples);
  detail::read_opt(j, "lambda3", c.lambda3);
}

/// Everything a command needs: loss, sampling and optimizer settings.
struct RunConfig {
  OptimConfig optim;
  std::uint64_t seed = 0;
};

inline json to_json(const RunConfig& rc) {
  const OptimConfig& o = rc.optim;
  return {{"sv", to_json(o.sv)},
          {"mv", to_json(o.mv)},
          {"optim",
           {{"step", o.step},
            {"depth_step_scale", o.depth_step_scale},
            {"update", o.update == UpdateRule::Proximal ? "proximal" : "gradient"},
            {"iterations", o.iterations},
            {"lambda_data", o.lambda_data},
            {"gradient_mode", to_string(o.mode)},
            {"fd_step", o.fd_step},
            {"use_svgeo", o.use_svgeo},
            {"use_mvgeo", o.use_mvgeo}}},
          {"threads", o.threads},
          {"seed", rc.seed}};
}

/// Reads a run config. A run manifest is accepted too: its "config" member is used.
inline RunConfig run_config_from_json(const json& in) {
  const json& j = in.contains("config") && in.contains("command") ? in.at("config") : in;
  detail::require_object(j, "config");
  detail::check_keys(j, {"sv", "mv", "optim", "threads", "seed"}, "config");
  RunConfig rc;
  if (j.contains("sv")) from_json(j.at("sv"), rc.optim.sv);
  if (j.contains("mv")) from_json(j.at("mv"), rc.optim.mv);
  if (j.contains("optim")) {
    const json& o = j.at("optim");
    detail::require_object(o, "optim config");
    detail::check_keys(o, {"step", "depth_step_scale", "update", "iterations", "lambda_data", "gradient_mode",
                           "fd_step", "use_svgeo", "use_mvgeo"},
                       "optim config");
    detail::read_opt(o, "step", rc.optim.step);
    detail::read_opt(o, "depth_step_scale", rc.optim.depth_step_scale);
    detail::read_opt(o, "iterations", rc.optim.iterations);
    detail::read_opt(o, "lambda_data", rc.optim.lambda_data);
    detail::read_opt(o, "fd_step", rc.optim.fd_step);
    detail::read_opt(o, "use_svgeo", rc.optim.use_svgeo);
    detail::read_opt(o, "use_mvgeo", rc.optim.use_mvgeo);
    std::string mode = to_string(rc.optim.mode);
    detail::read_opt(o, "gradient_mode", mode);
    if (mode == "analytic") rc.optim.mode = GradientMode::Analytic;
    else if (mode == "finite-difference") rc.optim.mode = GradientMode::FiniteDifference;
    else throw InputError("gradient_mode must be 'analytic' or 'finite-difference', got '" + mode + "'");
    std::string update = rc.optim.update == UpdateRule::Proximal ? "proximal" : "gradient";
    detail::read_opt(o, "update", update);
    if (update == "proximal") rc.optim.update = UpdateRule::Proximal;
    else if (update == "gradient") rc.optim.update = UpdateRule::Gradient;
    else throw InputError("update must be 'proximal' or 'gradient', got '" + update + "'");
  }
  detail::read_opt(j, "threads", rc.optim.threads);
  detail::read_opt(j, "seed", rc.seed);
  rc.optim.validate();
  return rc;
}

inline json to_json(const SvLossReport& r) {
  return {{"l_svn", r.l_svn},       {"l_cross", r.l_cross},          {"tv_normal", r.tv_normal},
          {"l_svgeo", r.l_svgeo},   {"n_rich_trust", r.n_rich_trust}, {"n_less", r.n_less}};
}

inline json to_json(const MvReport& r) {
  return {{"loss", r.loss},
          {"n_candidates", r.n_candidates},
          {"n_sampled", r.n_sampled},
          {"n_accepted_patches", r.n_accepted_patches},
          {"gamma", r.gamma},
          {"mean_w_kappa", r.mean_w_kappa},
          {"empty_patch_set", r.empty}};
}

inline json to_json(const LossTerms& t) {
  return {{"total", t.total}, {"data", t.data}, {"svn", t.svn},
          {"cross", t.cross}, {"tv", t.tv},     {"mvgeo", t.mvgeo}};
}

inline json to_json(const Camera& c) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) rot.push_back(detail::vec3(c.pose.rotation.row(r).transpose()));
  return {{"fx", c.fx},       {"fy", c.fy},         {"cx", c.cx}, {"cy", c.cy}, {"width", c.width},
          {"height", c.height}, {"rotation", rot}, {"translation", detail::vec3(c.pose.translation)}};
}

inline Camera camera_from_json(const json& j) {
  detail::require_object(j, "camera");
  detail::check_keys(j, {"fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"}, "camera");
  for (const char* k : {"fx", "fy", "cx", "cy", "width", "height"}) {
    if (!j.contains(k)) throw InputError(std::string("camera is missing '") + k + "'");
  }
  Camera c;
  detail::read_opt(j, "fx", c.fx);
  detail::read_opt(j, "fy", c.fy);
  detail::read_opt(j, "cx", c.cx);
  detail::read_opt(j, "cy", c.cy);
  detail::read_opt(j, "width", c.width);
  detail::read_opt(j, "height", c.height);
  if (j.contains("rotation")) {
    const json& r = j.at("rotation");
    if (!r.is_array() || r.size() != 3) throw InputError("camera rotation must be a 3x3 array of rows");
    for (int i = 0; i < 3; ++i) c.pose.rotation.row(i) = detail::vec3(r[i], "camera rotation row").transpose();
  }
  if (j.contains("translation")) c.pose.translation = detail::vec3(j.at("translation"), "camera translation");
  c.validate();
  return c;
}

inline SurfaceKind surface_kind_from_string(const std::string& s) {
  if (s == "tilted-plane") return SurfaceKind::TiltedPlane;
  if (s == "sphere-cap") return SurfaceKind::SphereCap;
  if (s == "sine-heightfield") return SurfaceKind::SineHeightfield;
  throw InputError("unknown scene kind '" + s + "'");
}

inline TextureKind texture_kind_from_string(const std::string& s) {
  if (s == "checker") return TextureKind::Checker;
  if (s == "flat") return TextureKind::Flat;
  if (s == "half-checker-half-flat") return TextureKind::HalfCheckerHalfFlat;
  throw InputError("unknown texture kind '" + s + "'");
}

inline json to_json(const SceneSpec& s) {
  json cams = json::array();
  for (const auto& c : s.cameras) cams.push_back(to_json(c));
  json j = {{"kind", to_string(s.kind)}};
  switch (s.kind) {
    case SurfaceKind::TiltedPlane:
      j["plane"] = {{"normal", detail::vec3(s.plane.normal)}, {"offset", s.plane.offset}};
      break;
    case SurfaceKind::SphereCap:
      j["sphere"] = {{"center", detail::vec3(s.sphere.center)}, {"radius", s.sphere.radius}};
      break;
    case SurfaceKind::SineHeightfield:
      j["sine"] = {{"base", s.sine.base}, {"amplitude", s.sine.amplitude}, {"frequency", s.sine.frequency}};
      break;
  }
  j["texture"] = {{"kind", to_string(s.texture.kind)}, {"cell_px", s.texture.cell_px},
                  {"flat_value", s.texture.flat_value}};
  j["cameras"] = cams;
  j["noise"] = {{"depth_sigma", s.noise.depth_sigma}, {"normal_sigma_deg", s.noise.normal_sigma_deg}};
  j["seed"] = s.seed;
  return j;
}

/// Scene spec from JSON. Without "cameras" the two-view default rig of
/// make_scene is used, sized by "size" (default 64) and placed "distance"
/// (default 20) in front of the first camera; explicit geometry fields
/// override the defaults.
inline SceneSpec scene_from_json(const json& j) {
  detail::require_object(j, "scene spec");
  detail::check_keys(j, {"kind", "plane", "sphere", "sine", "texture", "cameras", "noise", "seed", "size", "distance",
                         "baseline"},
                     "scene spec");
  if (!j.contains("kind")) throw InputError("scene spec is missing 'kind'");
  std::string kind;
  detail::read_opt(j, "kind", kind);
  int size = 64;
  double distance = 20.0, baseline = 1.0;
  detail::read_opt(j, "size", size);
  detail::read_opt(j, "distance", distance);
  detail::read_opt(j, "baseline", baseline);
  if (size < 3) throw InputError("scene size must be >= 3");
  SceneSpec s = make_scene(surface_kind_from_string(kind), size, TextureKind::Checker, distance, baseline);
  if (j.contains("plane")) {
    const json& p = j.at("plane");
    detail::require_object(p, "plane");
    detail::check_keys(p, {"normal", "offset"}, "plane");
    if (p.contains("normal")) s.plane.normal = detail::vec3(p.at("normal"), "plane normal");
    detail::read_opt(p, "offset", s.plane.offset);
  }
  if (j.contains("sphere")) {
    const json& p = j.at("sphere");
    detail::require_object(p, "sphere");
    detail::check_keys(p, {"center", "radius"}, "sphere");
    if (p.contains("center")) s.sphere.center = detail::vec3(p.at("center"), "sphere center");
    detail::read_opt(p, "radius", s.sphere.radius);
  }
  if (j.contains("sine")) {
    const json& p = j.at("sine");
    detail::require_object(p, "sine");
    detail::check_keys(p, {"base", "amplitude", "frequency"}, "sine");
    detail::read_opt(p, "base", s.sine.base);
    detail::read_opt(p, "amplitude", s.sine.amplitude);
    detail::read_opt(p, "frequency", s.sine.frequency);
  }
  if (j.contains("texture")) {
    const json& t = j.at("texture");
    detail::require_object(t, "texture");
    detail::check_keys(t, {"kind", "cell_px", "flat_value"}, "texture");
    std::string tk = to_string(s.texture.kind);
    detail::read_opt(t, "kind", tk);
    s.texture.kind = texture_kind_from_string(tk);
    detail::read_opt(t, "cell_px", s.texture.cell_px);
    detail::read_opt(t, "flat_value", s.texture.flat_value);
  }
  if (j.contains("cameras")) {
    const json& cs = j.at("cameras");
    if (!cs.is_array() || cs.empty()) throw InputError("cameras must be a non-empty array");
    s.cameras.clear();
    for (const auto& c : cs) s.cameras.push_back(camera_from_json(c));
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    detail::require_object(n, "noise");
    detail::check_keys(n, {"depth_sigma", "normal_sigma_deg"}, "noise");
    detail::read_opt(n, "depth_sigma", s.noise.depth_sigma);
    detail::read_opt(n, "normal_sigma_deg", s.noise.normal_sigma_deg);
  }
  detail::read_opt(j, "seed", s.seed);
  s.validate();
  return s;
}

/// 64-bit FNV-1a of a string, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k, h >>= 4) out[static_cast<std::size_t>(k)] = digits[h & 0xF];
  return out;
}

inline std::string spec_hash(const SceneSpec& s) { return fnv1a_hex(to_json(s).dump()); }

}  // namespace surfcon::io
