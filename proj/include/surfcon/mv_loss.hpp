#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "surfcon/camera.hpp"
#include "surfcon/geometry.hpp"
#include "surfcon/grid.hpp"
#include "surfcon/partition.hpp"

namespace surfcon {

struct MvConfig {
  double beta = 0.5;
  double eps_d = 0.1;
  double gamma_fraction = 0.3;
  int samples = 16;  ///< S; 0 disables the cross-view term
  double lambda3 = 0.001;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw InputError("beta must lie in [0,1]");
    if (!(eps_d > 0.0)) throw InputError("eps_d must be positive");
    if (!(gamma_fraction >= 0.0 && gamma_fraction < 1.0)) throw InputError("gamma_fraction must lie in [0,1)");
    if (samples < 0) throw InputError("S must be >= 0");
    if (!(lambda3 >= 0.0)) throw InputError("lambda3 must be >= 0");
  }
};

inline ScalarField fuse_weights(const ScalarField& w_cur, const ScalarField& w_nbr, double beta) {
  require_same_shape(w_cur, w_nbr, "fuse_weights");
  ScalarField out(w_cur.width(), w_cur.height());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = beta * w_cur[k] + (1.0 - beta) * w_nbr[k];
  return out;
}

/// Current-view points that land inside the neighbor image at depth >= eps_d.
inline RegionMask validity_mask(const VectorField& points_cur, const Pose& pose_cur, const Pose& pose_nbr,
                                const Camera& cam_nbr, double eps_d) {
  const VectorField in_nbr = transform_points(points_cur, pose_cur, pose_nbr);
  RegionMask mask(points_cur.width(), points_cur.height(), RegionLabel::Validity);
  for (std::size_t k = 0; k < in_nbr.size(); ++k) {
    const Eigen::Vector3d& p = in_nbr[k];
    if (!(p.z() >= eps_d)) continue;
    const auto proj = project_point(p, cam_nbr);
    mask[k] = (proj.u >= 0.0 && proj.u < cam_nbr.width && proj.v >= 0.0 && proj.v < cam_nbr.height) ? 1 : 0;
  }
  return mask;
}

struct CandidateSet {
  std::vector<Pixel> pixels;  ///< row-major order
  double gamma = 0.0;
};

/// Valid pixels with W_avg >= gamma_fraction * mean(W_avg), excluding the
/// one-pixel border so every candidate owns a full 3x3 patch.
inline CandidateSet candidate_set(const ScalarField& w_avg, const RegionMask& valid, double gamma_fraction) {
  require_same_shape(w_avg, valid, "candidate_set");
  CompensatedSum sum;
  for (double v : w_avg.values()) sum += v;
  CandidateSet q;
  q.gamma = gamma_fraction * sum.value() / static_cast<double>(w_avg.size());
  for (int i = 1; i + 1 < w_avg.height(); ++i) {
    for (int j = 1; j + 1 < w_avg.width(); ++j) {
      if (valid.test(i, j) && w_avg(i, j) >= q.gamma) q.pixels.push_back({i, j});
    }
  }
  return q;
}

struct SampleSet {
  std::vector<Pixel> pixels;
  std::vector<double> weights;  ///< non-increasing
};

/// The min(S, |Q|) highest-weight candidates; ties go to the smaller row, then column.
inline SampleSet top_s_sample(const std::vector<Pixel>& candidates, const ScalarField& w_avg, int s) {
  std::vector<Pixel> order = candidates;
  std::stable_sort(order.begin(), order.end(), [&](const Pixel& a, const Pixel& b) {
    const double wa = w_avg(a), wb = w_avg(b);
    if (wa != wb) return wa > wb;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(s, 0)));
  SampleSet out;
  out.pixels.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  for (const auto& p : out.pixels) out.weights.push_back(w_avg(p));
  return out;
}

struct PatchAnalysis {
  Eigen::Vector3d normal;
  Eigen::Vector3d eigenvalues;  ///< descending
  Eigen::Vector3d centroid;
  double curvature_weight = 1.0;
};

/// Curvature weight exp(-10 * eta_min / sum(eta)).
inline double curvature_weight(const Eigen::Vector3d& eigenvalues_desc) {
  const double total = eigenvalues_desc.sum();
  if (!(total > 0.0)) return 1.0;
  return std::exp(-10.0 * eigenvalues_desc[2] / total);
}

/// PCA of a set of points: unnormalized scatter matrix, normal = eigenvector
/// of the smallest eigenvalue oriented toward `viewpoint`. Returns nullopt
/// when the scatter vanishes (all points coincide).
inline std::optional<PatchAnalysis> fit_patch(const std::vector<Eigen::Vector3d>& pts,
                                              const Eigen::Vector3d& viewpoint) {
  if (pts.empty()) return std::nullopt;
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mu += p;
  mu /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - mu;
    cov.noalias() += d * d.transpose();
  }
  const double scale = 1e-12 * (1.0 + mu.norm());
  if (!(cov.trace() > scale * scale)) return std::nullopt;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (es.info() != Eigen::Success) return std::nullopt;
  // Eigen sorts ascending.
  const Eigen::Vector3d ev = es.eigenvalues();
  PatchAnalysis out;
  out.eigenvalues = Eigen::Vector3d(std::max(ev[2], 0.0), std::max(ev[1], 0.0), std::max(ev[0], 0.0));
  out.normal = es.eigenvectors().col(0).normalized();
  if (out.normal.dot(viewpoint - mu) < 0.0) out.normal = -out.normal;
  out.centroid = mu;
  out.curvature_weight = curvature_weight(out.eigenvalues);
  return out;
}

/// 3x3 patch PCA around `center`. Rejects patches that touch the border,
/// contain (0,0,0) sentinels or have zero scatter.
inline std::optional<PatchAnalysis> patch_pca(const VectorField& points, Pixel center,
                                              const Eigen::Vector3d& camera_center) {
  if (center.i < 1 || center.j < 1 || center.i + 1 >= points.height() || center.j + 1 >= points.width()) {
    return std::nullopt;
  }
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(9);
  for (int di = -1; di <= 1; ++di) {
    for (int dj = -1; dj <= 1; ++dj) {
      const Eigen::Vector3d& p = points(center.i + di, center.j + dj);
      if (p.x() == 0.0 && p.y() == 0.0 && p.z() == 0.0) return std::nullopt;
      pts.push_back(p);
    }
  }
  return fit_patch(pts, camera_center);
}

struct MvReport {
  double loss = 0.0;
  std::size_t n_candidates = 0;
  std::size_t n_sampled = 0;
  std::size_t n_accepted_patches = 0;
  double gamma = 0.0;
  double mean_w_kappa = 0.0;
  bool empty = true;  ///< no accepted patch pair; loss is then 0
};

/// One view's contribution to the cross-view term.
struct MvView {
  const ScalarField& points_depth;  ///< depth used for backprojection
  const ScalarField& depth;         ///< D for the weight map
  const ScalarField& unbiased;      ///< D^ for the weight map
  const Camera& cam;
};

/// Sampling stage: weights, validity and top-S selection. Held fixed while
/// probing the patch term with finite differences.
struct MvSampling {
  ScalarField w_avg;
  RegionMask valid;
  CandidateSet candidates;
  SampleSet samples;
};

inline MvSampling mv_sampling(const MvView& cur, const MvView& nbr, const VectorField& points_cur,
                              const MvConfig& cfg) {
  require_same_shape(cur.depth, nbr.depth, "mvgeo_loss");
  MvSampling s;
  s.w_avg = fuse_weights(depth_weight_map(cur.depth, cur.unbiased), depth_weight_map(nbr.depth, nbr.unbiased),
                         cfg.beta);
  s.valid = validity_mask(points_cur, cur.cam.pose, nbr.cam.pose, nbr.cam, cfg.eps_d);
  s.candidates = candidate_set(s.w_avg, s.valid, cfg.gamma_fraction);
  s.samples = top_s_sample(s.candidates.pixels, s.w_avg, cfg.samples);
  return s;
}

/// Curvature-weighted cosine residual of one patch pair; |.| makes it
/// invariant to the sign of either normal.
inline double patch_consistency(const Eigen::Vector3d& n_cur, const Eigen::Vector3d& n_nbr, double w_kappa) {
  const double c = std::min(1.0, std::abs(n_cur.dot(n_nbr)));
  return w_kappa * (1.0 - c);
}

/// Patch stage: curvature-weighted 1 - |n_c . n_n| over the sampled pixels,
/// both point maps already expressed in the current camera frame.
inline MvReport mv_patch_loss(const VectorField& points_cur, const VectorField& points_nbr_in_cur,
                              const Eigen::Vector3d& nbr_center_in_cur, const std::vector<Pixel>& samples) {
  MvReport r;
  r.n_sampled = samples.size();
  CompensatedSum sum, wsum;
  for (const auto& px : samples) {
    const auto pc = patch_pca(points_cur, px, Eigen::Vector3d::Zero());
    if (!pc) continue;
    const auto pn = patch_pca(points_nbr_in_cur, px, nbr_center_in_cur);
    if (!pn) continue;
    sum += patch_consistency(pc->normal, pn->normal, pc->curvature_weight);
    wsum += pc->curvature_weight;
    ++r.n_accepted_patches;
  }
  r.empty = r.n_accepted_patches == 0;
  if (!r.empty) {
    const auto n = static_cast<double>(r.n_accepted_patches);
    r.loss = sum.value() / n;
    r.mean_w_kappa = wsum.value() / n;
  }
  return r;
}

/// Full cross-view pipeline with `cur` as the current view and `nbr` as its neighbor.
inline MvReport mvgeo_loss(const MvView& cur, const MvView& nbr, const MvConfig& cfg) {
  cfg.validate();
  require_same_shape(cur.points_depth, nbr.points_depth, "mvgeo_loss");
  require_same_shape(cur.points_depth, cur.depth, "mvgeo_loss");
  const VectorField pts_cur = backproject_depth(cur.points_depth, cur.cam);
  const MvSampling s = mv_sampling(cur, nbr, pts_cur, cfg);
  MvReport r;
  if (!s.samples.pixels.empty()) {
    const VectorField pts_nbr = backproject_depth(nbr.points_depth, nbr.cam);
    const VectorField nbr_in_cur = transform_points(pts_nbr, nbr.cam.pose, cur.cam.pose);
    const Pose rel = cur.cam.pose * nbr.cam.pose.inverse();
    r = mv_patch_loss(pts_cur, nbr_in_cur, rel.translation, s.samples.pixels);
  }
  r.n_candidates = s.candidates.pixels.size();
  r.gamma = s.candidates.gamma;
  return r;
}

}  // namespace surfcon
