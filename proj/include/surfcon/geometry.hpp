#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "surfcon/camera.hpp"
#include "surfcon/grid.hpp"

namespace surfcon {

/// Camera-frame point map: X(i,j) = depth(i,j) * K^-1 [j i 1]^T.
inline VectorField backproject_depth(const ScalarField& depth, const Camera& cam) {
  VectorField points(depth.width(), depth.height());
  for (int i = 0; i < depth.height(); ++i) {
    for (int j = 0; j < depth.width(); ++j) {
      const double z = depth(i, j);
      if (!(z > 0.0) || !std::isfinite(z)) {
        throw InputError("backproject_depth: non-positive depth at pixel " + to_string(Pixel{i, j}));
      }
      points(i, j) = z * cam.ray(i, j);
    }
  }
  return points;
}

struct UnbiasedDepth {
  ScalarField depth;    ///< value at invalid pixels is 0 and carries no meaning
  RegionMask invalid;   ///< pixels whose normal is (nearly) orthogonal to the ray
};

/// Plane-induced depth D / (N . K^-1 p~). `plane_distance` is the signed
/// plane offset n . X, so camera-facing normals come with negative offsets.
inline UnbiasedDepth unbiased_depth(const ScalarField& plane_distance, const VectorField& normals,
                                    const Camera& cam) {
  require_same_shape(plane_distance, normals, "unbiased_depth");
  UnbiasedDepth out{ScalarField(plane_distance.width(), plane_distance.height()),
                    RegionMask(plane_distance.width(), plane_distance.height(), RegionLabel::Invalid)};
  for (int i = 0; i < plane_distance.height(); ++i) {
    for (int j = 0; j < plane_distance.width(); ++j) {
      const double denom = normals(i, j).dot(cam.ray(i, j));
      if (std::abs(denom) < 1e-6) {
        out.invalid.set(i, j);
        continue;
      }
      out.depth(i, j) = plane_distance(i, j) / denom;
    }
  }
  return out;
}

struct DepthNormals {
  VectorField normals;  ///< (0,0,0) where invalid
  RegionMask invalid;
};

namespace detail {

/// Central difference along one image axis, one-sided at the borders, zero
/// when the axis has a single sample. Returns (minus index, plus index, scale).
struct Stencil {
  int lo;
  int hi;
  double scale;
};

inline Stencil axis_stencil(int k, int n) {
  if (n < 2) return {k, k, 0.0};
  if (k == 0) return {0, 1, 1.0};
  if (k == n - 1) return {n - 2, n - 1, 1.0};
  return {k - 1, k + 1, 0.5};
}

}  // namespace detail

/// Normals of the backprojected depth surface from the cross product of
/// central-difference tangents (one-sided at borders), oriented toward the
/// camera center.
inline DepthNormals normal_from_depth(const ScalarField& depth, const Camera& cam) {
  const VectorField pts = backproject_depth(depth, cam);
  const int w = depth.width();
  const int h = depth.height();
  DepthNormals out{VectorField(w, h), RegionMask(w, h, RegionLabel::Invalid)};
  for (int i = 0; i < h; ++i) {
    const auto sv = detail::axis_stencil(i, h);
    for (int j = 0; j < w; ++j) {
      const auto su = detail::axis_stencil(j, w);
      const Eigen::Vector3d du = (pts(i, su.hi) - pts(i, su.lo)) * su.scale;
      const Eigen::Vector3d dv = (pts(sv.hi, j) - pts(sv.lo, j)) * sv.scale;
      Eigen::Vector3d n = du.cross(dv);
      const double len = n.norm();
      if (!(len > 0.0) || !std::isfinite(len)) {
        out.invalid.set(i, j);
        continue;
      }
      n /= len;
      if (n.dot(pts(i, j)) > 0.0) n = -n;
      out.normals(i, j) = n;
    }
  }
  return out;
}

/// Applies T_dst * T_src^-1 to every point; (0,0,0) sentinels pass through.
inline VectorField transform_points(const VectorField& points, const Pose& src, const Pose& dst) {
  src.validate();
  dst.validate();
  const Pose rel = dst * src.inverse();
  VectorField out(points.width(), points.height());
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Eigen::Vector3d& p = points[k];
    out[k] = (p.x() == 0.0 && p.y() == 0.0 && p.z() == 0.0) ? p : rel.apply(p);
  }
  return out;
}

struct Projection {
  double u;
  double v;
  double z;
};

/// Pinhole projection. No bounds or sign checks: points with z <= 0 still
/// produce coordinates and callers mask them.
inline Projection project_point(const Eigen::Vector3d& p, const Camera& cam) {
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
}

}  // namespace surfcon
