#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "surfcon/geometry.hpp"
#include "surfcon/grid.hpp"
#include "surfcon/partition.hpp"

namespace surfcon {

struct SvConfig {
  double lambda1 = 0.05;
  double lambda2 = 0.01;
  double theta = 0.8;
  double percentile = 75.0;

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InputError("lambda1 and lambda2 must be >= 0");
    if (!(theta >= 0.0 && theta <= 1.0)) {
      throw InputError("theta must lie in [0,1], got " + std::to_string(theta));
    }
    if (!(percentile > 0.0 && percentile < 100.0)) {
      throw InputError("percentile must lie in (0,100), got " + std::to_string(percentile));
    }
  }
};

struct SvLossReport {
  double l_svn = 0.0;      ///< weighted normal agreement + lambda1 * l_cross
  double l_cross = 0.0;    ///< unweighted orthogonality term
  double tv_normal = 0.0;
  double l_svgeo = 0.0;    ///< l_svn + lambda2 * tv_normal
  std::size_t n_rich_trust = 0;
  std::size_t n_less = 0;
};

/// Signed discrepancy D - D^.
inline ScalarField discrepancy_field(const ScalarField& depth, const ScalarField& unbiased) {
  require_same_shape(depth, unbiased, "discrepancy_field");
  ScalarField d(depth.width(), depth.height());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = depth[k] - unbiased[k];
  return d;
}

namespace detail {

inline double diff_x(const ScalarField& f, int i, int j) {
  const auto s = axis_stencil(j, f.width());
  return s.scale * (f(i, s.hi) - f(i, s.lo));
}

inline double diff_y(const ScalarField& f, int i, int j) {
  const auto s = axis_stencil(i, f.height());
  return s.scale * (f(s.hi, j) - f(s.lo, j));
}

inline double color_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return (a - b).cwiseAbs().sum() / 3.0;
}

inline double cross_residual(const ScalarField& delta, const VectorField& normals, int i, int j) {
  return diff_x(delta, i, j) * normals(i, j).y() - diff_y(delta, i, j) * normals(i, j).x();
}

}  // namespace detail

/// Mean over `mask` of |d(delta)/dx * N_y - d(delta)/dy * N_x|; 0 for an empty mask.
inline double cross_loss(const ScalarField& delta, const VectorField& normals, const RegionMask& mask) {
  require_same_shape(delta, normals, "cross_loss");
  require_same_shape(delta, mask, "cross_loss");
  CompensatedSum sum;
  std::size_t n = 0;
  for (int i = 0; i < delta.height(); ++i) {
    for (int j = 0; j < delta.width(); ++j) {
      if (!mask.test(i, j)) continue;
      sum += std::abs(detail::cross_residual(delta, normals, i, j));
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum.value() / static_cast<double>(n);
}

/// Trust-weighted L1 normal agreement over `mask` plus lambda1 * cross_loss.
inline double svn_loss(const VectorField& depth_normals, const VectorField& normals, const ScalarField& weight,
                       const ScalarField& delta, const RegionMask& mask, double lambda1) {
  require_same_shape(depth_normals, normals, "svn_loss");
  require_same_shape(depth_normals, weight, "svn_loss");
  require_same_shape(depth_normals, mask, "svn_loss");
  CompensatedSum sum;
  std::size_t n = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    sum += weight[k] * (depth_normals[k] - normals[k]).cwiseAbs().sum();
    ++n;
  }
  if (n == 0) return 0.0;
  return sum.value() / static_cast<double>(n) + lambda1 * cross_loss(delta, normals, mask);
}

/// Color-weighted TV over the texture-less set; each pixel contributes the
/// terms toward its upper and left neighbors that exist.
inline double tv_normal_loss(const Image& img, const VectorField& normals, const RegionMask& less) {
  require_same_shape(img, normals, "tv_normal_loss");
  require_same_shape(img, less, "tv_normal_loss");
  CompensatedSum sum;
  std::size_t n = 0;
  for (int i = 0; i < img.height(); ++i) {
    for (int j = 0; j < img.width(); ++j) {
      if (!less.test(i, j)) continue;
      ++n;
      if (i > 0) {
        sum += std::exp(-detail::color_distance(img(i, j), img(i - 1, j))) *
               (normals(i, j) - normals(i - 1, j)).squaredNorm();
      }
      if (j > 0) {
        sum += std::exp(-detail::color_distance(img(i, j), img(i, j - 1))) *
               (normals(i, j) - normals(i, j - 1)).squaredNorm();
      }
    }
  }
  return n == 0 ? 0.0 : sum.value() / static_cast<double>(n);
}

/// Region bookkeeping shared by the loss and its gradients. The texture split
/// depends only on the image; the weight map and trust region on (D, D^).
struct SvRegions {
  ScalarField weight;
  double tau = 0.0;
  TexturePartition texture;
  RegionMask trust;
  RegionMask rich_trust;  ///< rich & trust & valid normals
};

inline TexturePartition image_texture(const Image& img, double percentile, double* tau_out = nullptr) {
  const auto g = sobel_gradients(img);
  const ScalarField mag = gradient_magnitude(g.gx, g.gy);
  const double tau = percentile_threshold(mag, percentile);
  if (tau_out) *tau_out = tau;
  return texture_partition(mag, tau);
}

inline SvRegions sv_regions(const ScalarField& depth, const ScalarField& unbiased, const TexturePartition& texture,
                            double tau, const SvConfig& cfg, const RegionMask* invalid = nullptr) {
  SvRegions r;
  r.weight = depth_weight_map(depth, unbiased);
  r.tau = tau;
  r.texture = texture;
  r.trust = trust_region(r.weight, cfg.theta);
  r.rich_trust = mask_and(texture.rich, r.trust, RegionLabel::Generic);
  if (invalid) {
    require_same_shape(r.rich_trust, *invalid, "sv_regions");
    for (std::size_t k = 0; k < invalid->size(); ++k) {
      if ((*invalid)[k]) r.rich_trust[k] = 0;
    }
  }
  return r;
}

/// Everything the single-view loss reads. `invalid` marks pixels whose
/// depth normal (or unbiased depth) is unusable; they leave the rich-trust set.
struct SvInputs {
  const VectorField& depth_normals;  ///< N_d
  const VectorField& normals;        ///< N
  const ScalarField& depth;          ///< D
  const ScalarField& unbiased;       ///< D^
  const Image& image;
  const RegionMask* invalid = nullptr;
};

inline SvRegions sv_regions(const SvInputs& in, const SvConfig& cfg) {
  double tau = 0.0;
  const auto texture = image_texture(in.image, cfg.percentile, &tau);
  return sv_regions(in.depth, in.unbiased, texture, tau, cfg, in.invalid);
}

inline SvLossReport svgeo_loss(const SvRegions& regions, const VectorField& depth_normals, const VectorField& normals,
                               const ScalarField& delta, const Image& img, const SvConfig& cfg) {
  SvLossReport r;
  r.n_rich_trust = regions.rich_trust.count();
  r.n_less = regions.texture.less.count();
  r.l_cross = cross_loss(delta, normals, regions.rich_trust);
  r.l_svn = svn_loss(depth_normals, normals, regions.weight, delta, regions.rich_trust, cfg.lambda1);
  r.tv_normal = tv_normal_loss(img, normals, regions.texture.less);
  r.l_svgeo = r.l_svn + cfg.lambda2 * r.tv_normal;
  return r;
}

inline SvLossReport svgeo_loss(const SvInputs& in, const SvConfig& cfg) {
  cfg.validate();
  require_same_shape(in.depth_normals, in.normals, "svgeo_loss");
  require_same_shape(in.depth, in.normals, "svgeo_loss");
  require_same_shape(in.image, in.normals, "svgeo_loss");
  const SvRegions regions = sv_regions(in, cfg);
  return svgeo_loss(regions, in.depth_normals, in.normals, discrepancy_field(in.depth, in.unbiased), in.image, cfg);
}

/// Exact partials of l_svgeo with weights, masks and N_d held fixed.
/// `d_depth_normals` is the partial with respect to N_d, used when callers
/// chain through a depth-dependent N_d.
struct SvGradients {
  VectorField d_normals;
  ScalarField d_discrepancy;
  VectorField d_depth_normals;
};

inline SvGradients svgeo_gradients(const SvRegions& regions, const VectorField& depth_normals,
                                   const VectorField& normals, const ScalarField& delta, const Image& img,
                                   const SvConfig& cfg) {
  const int w = normals.width();
  const int h = normals.height();
  SvGradients g{VectorField(w, h), ScalarField(w, h), VectorField(w, h)};

  const auto n_rt = regions.rich_trust.count();
  if (n_rt > 0) {
    const double inv = 1.0 / static_cast<double>(n_rt);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (!regions.rich_trust.test(i, j)) continue;
        const Eigen::Vector3d diff = depth_normals(i, j) - normals(i, j);
        const Eigen::Vector3d sg(sign0(diff.x()), sign0(diff.y()), sign0(diff.z()));
        const double wk = regions.weight(i, j) * inv;
        g.d_normals(i, j) -= wk * sg;
        g.d_depth_normals(i, j) += wk * sg;

        // lambda1 * |dx * N_y - dy * N_x|
        const double dx = detail::diff_x(delta, i, j);
        const double dy = detail::diff_y(delta, i, j);
        const double s = sign0(dx * normals(i, j).y() - dy * normals(i, j).x()) * cfg.lambda1 * inv;
        if (s == 0.0) continue;
        g.d_normals(i, j).y() += s * dx;
        g.d_normals(i, j).x() -= s * dy;
        const auto sx = detail::axis_stencil(j, w);
        const double cx = s * normals(i, j).y() * sx.scale;
        g.d_discrepancy(i, sx.hi) += cx;
        g.d_discrepancy(i, sx.lo) -= cx;
        const auto sy = detail::axis_stencil(i, h);
        const double cy = -s * normals(i, j).x() * sy.scale;
        g.d_discrepancy(sy.hi, j) += cy;
        g.d_discrepancy(sy.lo, j) -= cy;
      }
    }
  }

  const auto n_less = regions.texture.less.count();
  if (n_less > 0 && cfg.lambda2 != 0.0) {
    const double c = 2.0 * cfg.lambda2 / static_cast<double>(n_less);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        if (!regions.texture.less.test(i, j)) continue;
        if (i > 0) {
          const Eigen::Vector3d d = c * std::exp(-detail::color_distance(img(i, j), img(i - 1, j))) *
                                    (normals(i, j) - normals(i - 1, j));
          g.d_normals(i, j) += d;
          g.d_normals(i - 1, j) -= d;
        }
        if (j > 0) {
          const Eigen::Vector3d d = c * std::exp(-detail::color_distance(img(i, j), img(i, j - 1))) *
                                    (normals(i, j) - normals(i, j - 1));
          g.d_normals(i, j) += d;
          g.d_normals(i, j - 1) -= d;
        }
      }
    }
  }
  return g;
}

inline SvGradients svgeo_gradients(const SvInputs& in, const SvConfig& cfg) {
  cfg.validate();
  const SvRegions regions = sv_regions(in, cfg);
  return svgeo_gradients(regions, in.depth_normals, in.normals, discrepancy_field(in.depth, in.unbiased),
                         in.image, cfg);
}

}  // namespace surfcon
