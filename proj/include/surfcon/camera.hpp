#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "surfcon/grid.hpp"

namespace surfcon {

/// Rigid transform T = [R t; 0 1] mapping world coordinates into the camera
/// frame (extrinsics), so T_dst * T_src^-1 carries src-camera points into the
/// dst camera.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  /// Camera center expressed in world coordinates.
  Eigen::Vector3d center() const { return -(rotation.transpose() * translation); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  void validate() const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    const double det = rotation.determinant();
    if (!(ortho <= 1e-9) || !(std::abs(det - 1.0) <= 1e-9) || !translation.allFinite()) {
      throw InputError("pose rotation is not a proper rotation (|R^T R - I| = " +
                       std::to_string(ortho) + ", det = " + std::to_string(det) + ")");
    }
  }
};

/// Extrinsic pose of a camera at `eye` looking at `target`. Camera axes:
/// x right, y down, z forward.
inline Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                    const Eigen::Vector3d& up = Eigen::Vector3d(0, -1, 0)) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-12) throw InputError("look_at: up vector parallel to viewing direction");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);
  Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

/// Pinhole camera without distortion.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  Pose pose;

  /// K^-1 [u v 1]^T for pixel (i, j) with u = j, v = i.
  Eigen::Vector3d ray(int i, int j) const { return {(j - cx) / fx, (i - cy) / fy, 1.0}; }
  Eigen::Vector3d ray(Pixel p) const { return ray(p.i, p.j); }

  Eigen::Matrix3d intrinsics() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw InputError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InputError("camera image size must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height)) {
      throw InputError("camera principal point outside the image");
    }
    pose.validate();
  }
};

}  // namespace surfcon
