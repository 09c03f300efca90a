#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "surfcon/camera.hpp"
#include "surfcon/geometry.hpp"
#include "surfcon/grid.hpp"
#include "surfcon/rng.hpp"

namespace surfcon {

enum class SurfaceKind { TiltedPlane, SphereCap, SineHeightfield };
enum class TextureKind { Checker, Flat, HalfCheckerHalfFlat };

/// World plane n . X = offset.
struct PlaneParams {
  Eigen::Vector3d normal = Eigen::Vector3d(0, 0, -1);
  double offset = -2.0;
};

struct SphereParams {
  Eigen::Vector3d center = Eigen::Vector3d(0, 0, 6);
  double radius = 4.5;
};

/// World heightfield z = base + amplitude * sin(2 pi f x) * cos(2 pi f y).
struct SineParams {
  double base = 6.0;
  double amplitude = 0.3;
  double frequency = 0.15;
};

/// Checker coordinates are pixels of the first camera: the hit point is
/// projected into camera 0 and cells of `cell_px` pixels alternate colors.
struct TextureSpec {
  TextureKind kind = TextureKind::Checker;
  double cell_px = 4.0;
  double flat_value = 0.5;
};

struct NoiseSpec {
  double depth_sigma = 0.0;       ///< meters
  double normal_sigma_deg = 0.0;  ///< angular stddev
};

struct SceneSpec {
  SurfaceKind kind = SurfaceKind::TiltedPlane;
  PlaneParams plane;
  SphereParams sphere;
  SineParams sine;
  TextureSpec texture;
  std::vector<Camera> cameras;
  NoiseSpec noise;
  std::uint64_t seed = 0;

  void validate() const {
    if (cameras.empty()) throw InputError("scene needs at least one camera");
    for (const auto& c : cameras) c.validate();
    if (kind == SurfaceKind::TiltedPlane) {
      if (!(plane.normal.norm() > 0) || !plane.normal.allFinite() || !std::isfinite(plane.offset)) {
        throw InputError("plane parameters must be finite with a nonzero normal");
      }
    }
    if (kind == SurfaceKind::SphereCap) {
      if (!(sphere.radius > 0) || !sphere.center.allFinite()) throw InputError("sphere radius must be positive");
    }
    if (kind == SurfaceKind::SineHeightfield) {
      if (!std::isfinite(sine.base) || !std::isfinite(sine.amplitude) || !(sine.frequency >= 0)) {
        throw InputError("sine heightfield parameters must be finite");
      }
    }
    if (!(texture.cell_px > 0)) throw InputError("checker cell size must be positive");
    if (!(noise.depth_sigma >= 0) || !(noise.normal_sigma_deg >= 0)) throw InputError("noise sigmas must be >= 0");
  }
};

/// One rendered view. Normals live in the camera frame.
struct ViewBundle {
  Image rgb;
  ScalarField depth;
  ScalarField plane_distance;
  VectorField normals;
  Camera cam;
};

inline const char* to_string(SurfaceKind k) {
  switch (k) {
    case SurfaceKind::TiltedPlane: return "tilted-plane";
    case SurfaceKind::SphereCap: return "sphere-cap";
    case SurfaceKind::SineHeightfield: return "sine-heightfield";
  }
  return "tilted-plane";
}

inline const char* to_string(TextureKind k) {
  switch (k) {
    case TextureKind::Checker: return "checker";
    case TextureKind::Flat: return "flat";
    case TextureKind::HalfCheckerHalfFlat: return "half-checker-half-flat";
  }
  return "checker";
}

namespace detail {

struct Hit {
  double t;                 ///< ray parameter == camera-frame depth
  Eigen::Vector3d normal;   ///< world frame, not yet oriented
};

inline std::optional<Hit> intersect_plane(const PlaneParams& pl, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d n = pl.normal.normalized();
  const double off = pl.offset / pl.normal.norm();
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (off - n.dot(o)) / denom;
  if (!(t > 0) || !std::isfinite(t)) return std::nullopt;
  return Hit{t, n};
}

inline std::optional<Hit> intersect_sphere(const SphereParams& sp, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  const Eigen::Vector3d oc = o - sp.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * d.dot(oc);
  const double c = oc.squaredNorm() - sp.radius * sp.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : t0;
  if (t0 > t1) std::swap(t0, t1);
  const double t = t0 > 0 ? t0 : t1;
  if (!(t > 0)) return std::nullopt;
  return Hit{t, (o + t * d - sp.center).normalized()};
}

inline double sine_height(const SineParams& s, double x, double y) {
  const double w = 2.0 * std::numbers::pi * s.frequency;
  return s.base + s.amplitude * std::sin(w * x) * std::cos(w * y);
}

inline std::optional<Hit> intersect_sine(const SineParams& s, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  if (!(d.z() > 0)) return std::nullopt;
  auto g = [&](double t) {
    const Eigen::Vector3d p = o + t * d;
    return p.z() - sine_height(s, p.x(), p.y());
  };
  // First sign change by marching, then bisection to full precision.
  const double t_max = (s.base + std::abs(s.amplitude) - o.z()) / d.z() + 1.0;
  if (!(t_max > 0)) return std::nullopt;
  const int steps = 4000;
  double lo = 0.0, glo = g(0.0);
  if (glo >= 0) return std::nullopt;
  double hi = -1;
  for (int k = 1; k <= steps; ++k) {
    const double t = t_max * k / steps;
    const double gt = g(t);
    if (gt >= 0) {
      hi = t;
      break;
    }
    lo = t;
    glo = gt;
  }
  if (hi < 0) return std::nullopt;
  for (int it = 0; it < 200 && hi - lo > 0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(mid) < 0) lo = mid; else hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  const Eigen::Vector3d p = o + t * d;
  const double w = 2.0 * std::numbers::pi * s.frequency;
  const double hx = s.amplitude * w * std::cos(w * p.x()) * std::cos(w * p.y());
  const double hy = -s.amplitude * w * std::sin(w * p.x()) * std::sin(w * p.y());
  return Hit{t, Eigen::Vector3d(-hx, -hy, 1.0).normalized()};
}

inline Eigen::Vector3d quantize_rgb(const Eigen::Vector3d& c) {
  return (c * 255.0).array().round().matrix() / 255.0;
}

inline Eigen::Vector3d texture_color(const TextureSpec& tex, const Camera& ref, const Eigen::Vector3d& world) {
  const Eigen::Vector3d flat = quantize_rgb(Eigen::Vector3d::Constant(std::clamp(tex.flat_value, 0.0, 1.0)));
  if (tex.kind == TextureKind::Flat) return flat;
  const auto proj = project_point(ref.pose.apply(world), ref);
  if (tex.kind == TextureKind::HalfCheckerHalfFlat && !(proj.u < ref.width / 2.0 - 0.5)) return flat;
  // +0.5 keeps cell boundaries halfway between pixel centers.
  const auto cu = static_cast<long long>(std::floor((proj.u + 0.5) / tex.cell_px));
  const auto cv = static_cast<long long>(std::floor((proj.v + 0.5) / tex.cell_px));
  const bool odd = ((cu + cv) % 2 + 2) % 2 == 1;
  return odd ? Eigen::Vector3d(230, 217, 204) / 255.0 : Eigen::Vector3d(26, 38, 51) / 255.0;
}

}  // namespace detail

/// Analytic ray casting of the scene into every camera.
inline std::vector<ViewBundle> render_scene(const SceneSpec& spec) {
  spec.validate();
  std::vector<ViewBundle> views;
  const Camera& ref = spec.cameras.front();
  for (std::size_t v = 0; v < spec.cameras.size(); ++v) {
    const Camera& cam = spec.cameras[v];
    const int w = cam.width, h = cam.height;
    ViewBundle b{Image(w, h), ScalarField(w, h), ScalarField(w, h), VectorField(w, h), cam};
    const Eigen::Vector3d origin = cam.pose.center();
    const Eigen::Matrix3d cam_to_world = cam.pose.rotation.transpose();
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const Eigen::Vector3d r = cam.ray(i, j);
        const Eigen::Vector3d d = cam_to_world * r;
        std::optional<detail::Hit> hit;
        switch (spec.kind) {
          case SurfaceKind::TiltedPlane: hit = detail::intersect_plane(spec.plane, origin, d); break;
          case SurfaceKind::SphereCap: hit = detail::intersect_sphere(spec.sphere, origin, d); break;
          case SurfaceKind::SineHeightfield: hit = detail::intersect_sine(spec.sine, origin, d); break;
        }
        if (!hit) {
          throw InputError("render_scene: ray of view " + std::to_string(v) + " at pixel " +
                           to_string(Pixel{i, j}) + " misses the surface");
        }
        const double z = hit->t;
        Eigen::Vector3d n = (cam.pose.rotation * hit->normal).normalized();
        if (n.dot(r) > 0) n = -n;
        const Eigen::Vector3d world = origin + z * d;
        b.depth(i, j) = z;
        b.normals(i, j) = n;
        b.plane_distance(i, j) = z * n.dot(r);
        b.rgb(i, j) = detail::texture_color(spec.texture, ref, world);
      }
    }
    views.push_back(std::move(b));
  }
  return views;
}

/// Gaussian depth noise plus a random-axis normal rotation with angular
/// stddev `normal_sigma_deg`. The plane offset of each pixel becomes the mean
/// over its 4-neighbors of z_q (n_q . K^-1 q~) from the corrupted data, so
/// depth and plane-induced depth disagree the way blended renders do.
/// Both sigmas zero returns the input unchanged.
inline ViewBundle corrupt(const ViewBundle& in, double depth_sigma, double normal_sigma_deg, std::uint64_t seed) {
  if (!(depth_sigma >= 0) || !(normal_sigma_deg >= 0)) throw InputError("corrupt: sigmas must be >= 0");
  if (depth_sigma == 0.0 && normal_sigma_deg == 0.0) return in;
  const CounterRng root(seed);
  const CounterRng depth_rng = root.split(1), angle_rng = root.split(2), phase_rng = root.split(3);
  const double sigma_rad = normal_sigma_deg * std::numbers::pi / 180.0;

  ViewBundle out = in;
  const int w = in.depth.width(), h = in.depth.height();
  for (std::size_t k = 0; k < in.depth.size(); ++k) {
    if (depth_sigma > 0) {
      const double z = in.depth[k] + depth_sigma * depth_rng.normal(k);
      out.depth[k] = std::max(z, 1e-3 * in.depth[k]);
    }
    if (sigma_rad > 0) {
      const Eigen::Vector3d n = in.normals[k];
      const Eigen::Vector3d helper = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
      const Eigen::Vector3d e1 = n.cross(helper).normalized();
      const Eigen::Vector3d e2 = n.cross(e1);
      const double phi = 2.0 * std::numbers::pi * phase_rng.uniform(k);
      const Eigen::Vector3d axis = std::cos(phi) * e1 + std::sin(phi) * e2;
      const double angle = sigma_rad * angle_rng.normal(k);
      out.normals[k] = (n * std::cos(angle) + axis.cross(n) * std::sin(angle)).normalized();
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      CompensatedSum sum;
      int count = 0;
      const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
      for (int q = 0; q < 4; ++q) {
        const int ii = i + di[q], jj = j + dj[q];
        if (!out.depth.contains(ii, jj)) continue;
        sum += out.depth(ii, jj) * out.normals(ii, jj).dot(in.cam.ray(ii, jj));
        ++count;
      }
      out.plane_distance(i, j) =
          count > 0 ? sum.value() / count : out.depth(i, j) * out.normals(i, j).dot(in.cam.ray(i, j));
    }
  }
  return out;
}

/// Renders the scene and applies the spec's noise, view v drawing from seed
/// stream v.
inline std::vector<ViewBundle> render_observed(const SceneSpec& spec) {
  auto views = render_scene(spec);
  const CounterRng root(spec.seed);
  for (std::size_t v = 0; v < views.size(); ++v) {
    views[v] = corrupt(views[v], spec.noise.depth_sigma, spec.noise.normal_sigma_deg, root.split(v).key());
  }
  return views;
}

/// Pinhole camera with pixel-center principal point and the given horizontal field of view.
inline Camera make_camera(int width, int height, double fov_deg, const Pose& pose) {
  Camera c;
  c.width = width;
  c.height = height;
  c.fx = c.fy = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  c.cx = 0.5 * (width - 1);
  c.cy = 0.5 * (height - 1);
  c.pose = pose;
  return c;
}

/// Two-view reference scenes used by the tests and the acceptance harness.
/// Camera 0 sits at the origin looking down +z at a surface `distance` away;
/// camera 1 is offset by `baseline` along x and aimed at the same target.
inline SceneSpec make_scene(SurfaceKind kind, int size, TextureKind texture = TextureKind::Checker,
                            double distance = 20.0, double baseline = 1.0) {
  if (!(distance > 0)) throw InputError("scene distance must be positive");
  SceneSpec s;
  s.kind = kind;
  s.texture.kind = texture;
  double fov = 90.0;
  Eigen::Vector3d target(0, 0, distance);
  switch (kind) {
    case SurfaceKind::TiltedPlane: {
      const Eigen::Vector3d n = (Eigen::AngleAxisd(0.35, Eigen::Vector3d::UnitX()) *
                                 Eigen::AngleAxisd(-0.2, Eigen::Vector3d::UnitY()) * Eigen::Vector3d(0, 0, -1));
      s.plane.normal = n;
      s.plane.offset = n.dot(target);
      break;
    }
    case SurfaceKind::SphereCap:
      fov = 60.0;
      s.sphere = SphereParams{target, 0.75 * distance};
      target = Eigen::Vector3d(0, 0, 0.25 * distance);
      break;
    case SurfaceKind::SineHeightfield:
      s.sine = SineParams{distance, 0.05 * distance, 0.15 * 6.0 / distance};
      break;
  }
  s.cameras.push_back(make_camera(size, size, fov, Pose::identity()));
  s.cameras.push_back(make_camera(size, size, fov, look_at(Eigen::Vector3d(baseline, 0, 0), target)));
  return s;
}

}  // namespace surfcon
