#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "surfcon/io/pnm.hpp"
#include "surfcon/io/serialize.hpp"
#include "surfcon/synth.hpp"

namespace surfcon::io {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* manifest_name = "manifest.json";

/// A bundle directory as read back from disk.
struct BundleSet {
  std::vector<ViewBundle> views;
  std::optional<std::vector<ViewBundle>> truth;  ///< present when GT files were written
  json manifest;
};

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw InputError("write failed for " + path.string());
}

inline void ensure_writable_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw InputError("cannot create output directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw InputError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

namespace detail {

inline std::string view_file(std::size_t v, const char* what, const char* ext) {
  return "view" + std::to_string(v) + "_" + what + "." + ext;
}

}  // namespace detail

/// Writes rgb/depth/plane/normal per view and a manifest holding cameras,
/// the spec and its hash. Ground-truth depth and normals are written
/// alongside when `truth` is given. Returns the manifest.
inline json write_bundle(const std::filesystem::path& dir, const std::vector<ViewBundle>& views,
                         const SceneSpec& spec, const std::vector<ViewBundle>* truth = nullptr) {
  ensure_writable_dir(dir);
  json m;
  m["command"] = "synth";
  m["tool_version"] = tool_version;
  m["spec"] = to_json(spec);
  m["spec_hash"] = spec_hash(spec);
  json jv = json::array();
  json files = json::array();
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& b = views[v];
    json e;
    e["rgb"] = detail::view_file(v, "rgb", "ppm");
    e["depth"] = detail::view_file(v, "depth", "pfm");
    e["plane"] = detail::view_file(v, "plane", "pfm");
    e["normal"] = detail::view_file(v, "normal", "pfm");
    write_ppm(dir / e["rgb"].get<std::string>(), b.rgb);
    write_pfm(dir / e["depth"].get<std::string>(), b.depth);
    write_pfm(dir / e["plane"].get<std::string>(), b.plane_distance);
    write_pfm(dir / e["normal"].get<std::string>(), b.normals);
    for (const char* k : {"rgb", "depth", "plane", "normal"}) files.push_back(e[k]);
    if (truth) {
      e["gt_depth"] = detail::view_file(v, "gt_depth", "pfm");
      e["gt_normal"] = detail::view_file(v, "gt_normal", "pfm");
      write_pfm(dir / e["gt_depth"].get<std::string>(), (*truth)[v].depth);
      write_pfm(dir / e["gt_normal"].get<std::string>(), (*truth)[v].normals);
      files.push_back(e["gt_depth"]);
      files.push_back(e["gt_normal"]);
    }
    e["camera"] = to_json(b.cam);
    jv.push_back(e);
  }
  m["views"] = jv;
  m["files"] = files;
  write_json_file(dir / manifest_name, m);
  return m;
}

/// Reads a bundle directory; every missing file is listed in one error.
inline BundleSet read_bundle(const std::filesystem::path& dir) {
  const auto mpath = dir / manifest_name;
  if (!std::filesystem::exists(mpath)) throw InputError("missing bundle file: " + mpath.string());
  BundleSet out;
  out.manifest = read_json_file(mpath);
  if (!out.manifest.contains("views") || !out.manifest["views"].is_array() || out.manifest["views"].empty()) {
    throw InputError(mpath.string() + ": manifest lists no views");
  }
  std::vector<std::string> missing;
  bool has_truth = true;
  for (const auto& e : out.manifest["views"]) {
    for (const char* k : {"rgb", "depth", "plane", "normal"}) {
      if (!e.contains(k) || !e[k].is_string()) {
        missing.push_back(std::string("<manifest entry '") + k + "'>");
        continue;
      }
      const auto p = dir / e[k].get<std::string>();
      if (!std::filesystem::exists(p)) missing.push_back(p.string());
    }
    if (!e.contains("gt_depth") || !e.contains("gt_normal")) {
      has_truth = false;
    } else {
      for (const char* k : {"gt_depth", "gt_normal"}) {
        const auto p = dir / e[k].get<std::string>();
        if (!std::filesystem::exists(p)) missing.push_back(p.string());
      }
    }
    if (!e.contains("camera")) missing.push_back("<manifest entry 'camera'>");
  }
  if (!missing.empty()) {
    std::string msg = "missing bundle files:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InputError(msg);
  }
  std::vector<ViewBundle> truth;
  for (const auto& e : out.manifest["views"]) {
    ViewBundle b{read_ppm(dir / e["rgb"].get<std::string>()), read_pfm_scalar(dir / e["depth"].get<std::string>()),
                 read_pfm_scalar(dir / e["plane"].get<std::string>()),
                 read_pfm_vector(dir / e["normal"].get<std::string>()), camera_from_json(e["camera"])};
    require_same_shape(b.rgb, b.depth, "bundle view");
    require_same_shape(b.plane_distance, b.depth, "bundle view");
    require_same_shape(b.normals, b.depth, "bundle view");
    if (b.depth.width() != b.cam.width || b.depth.height() != b.cam.height) {
      throw InputError("bundle view size disagrees with its camera");
    }
    // float32 storage: renormalize so downstream unit-normal assumptions hold.
    for (std::size_t k = 0; k < b.normals.size(); ++k) {
      const double n = b.normals[k].norm();
      if (n > 0) b.normals[k] /= n;
    }
    if (has_truth) {
      ViewBundle t = b;
      t.depth = read_pfm_scalar(dir / e["gt_depth"].get<std::string>());
      t.normals = read_pfm_vector(dir / e["gt_normal"].get<std::string>());
      require_same_shape(t.depth, b.depth, "bundle ground truth");
      require_same_shape(t.normals, b.depth, "bundle ground truth");
      for (std::size_t k = 0; k < t.normals.size(); ++k) {
        const double n = t.normals[k].norm();
        if (n > 0) t.normals[k] /= n;
      }
      truth.push_back(std::move(t));
    }
    out.views.push_back(std::move(b));
  }
  if (has_truth) out.truth = std::move(truth);
  return out;
}

}  // namespace surfcon::io
