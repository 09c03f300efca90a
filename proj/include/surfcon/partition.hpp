#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "surfcon/grid.hpp"

namespace surfcon {

struct SobelGradients {
  ScalarField gx;
  ScalarField gy;
};

/// Unweighted channel mean.
inline ScalarField luminance(const Image& img) {
  ScalarField lum(img.width(), img.height());
  for (std::size_t k = 0; k < img.size(); ++k) lum[k] = (img[k][0] + img[k][1] + img[k][2]) / 3.0;
  return lum;
}

/// 3x3 Sobel responses of the luminance, replicate padding, applied as a
/// correlation so a left-to-right brightening ramp gives a positive Gx:
///   Kx = [-1 0 1; -2 0 2; -1 0 1],  Ky = Kx^T.
inline SobelGradients sobel_gradients(const Image& img) {
  if (img.width() < 3 || img.height() < 3) {
    throw InputError("sobel_gradients: image must be at least 3x3, got " + std::to_string(img.width()) +
                     "x" + std::to_string(img.height()));
  }
  // Work on channel sums and divide once at the end: with dyadic inputs every
  // intermediate is exact, so a uniform additive shift cancels bit for bit.
  ScalarField lum(img.width(), img.height());
  for (std::size_t k = 0; k < img.size(); ++k) lum[k] = img[k][0] + img[k][1] + img[k][2];
  const int w = img.width();
  const int h = img.height();
  auto at = [&](int i, int j) {
    return lum(std::clamp(i, 0, h - 1), std::clamp(j, 0, w - 1));
  };
  SobelGradients g{ScalarField(w, h), ScalarField(w, h)};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double tl = at(i - 1, j - 1), tc = at(i - 1, j), tr = at(i - 1, j + 1);
      const double ml = at(i, j - 1), mr = at(i, j + 1);
      const double bl = at(i + 1, j - 1), bc = at(i + 1, j), br = at(i + 1, j + 1);
      g.gx(i, j) = ((tr - tl) + 2.0 * (mr - ml) + (br - bl)) / 3.0;
      g.gy(i, j) = ((bl - tl) + 2.0 * (bc - tc) + (br - tr)) / 3.0;
    }
  }
  return g;
}

inline ScalarField gradient_magnitude(const ScalarField& gx, const ScalarField& gy) {
  require_same_shape(gx, gy, "gradient_magnitude");
  ScalarField g(gx.width(), gx.height());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::sqrt(gx[k] * gx[k] + gy[k] * gy[k]);
  return g;
}

/// Nearest-rank percentile: the value at sorted index ceil(p/100 * n) - 1.
inline double percentile_threshold(const ScalarField& field, double p) {
  if (!(p > 0.0 && p < 100.0)) {
    throw InputError("percentile must lie in (0,100), got " + std::to_string(p));
  }
  std::vector<double> v(field.values().begin(), field.values().end());
  if (v.empty()) throw InputError("percentile_threshold: empty field");
  const auto n = static_cast<double>(v.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  auto nth = v.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(v.begin(), nth, v.end());
  return *nth;
}

struct TexturePartition {
  RegionMask rich;  ///< G >= tau
  RegionMask less;  ///< complement of rich
};

inline TexturePartition texture_partition(const ScalarField& g, double tau) {
  TexturePartition out{RegionMask(g.width(), g.height(), RegionLabel::TextureRich),
                       RegionMask(g.width(), g.height(), RegionLabel::TextureLess)};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const bool rich = g[k] >= tau;
    out.rich[k] = rich ? 1 : 0;
    out.less[k] = rich ? 0 : 1;
  }
  return out;
}

/// W = 1 - |D - D^| / max|D - D^|, and W = 1 everywhere when the maximum is 0.
inline ScalarField depth_weight_map(const ScalarField& depth, const ScalarField& unbiased) {
  require_same_shape(depth, unbiased, "depth_weight_map");
  ScalarField w(depth.width(), depth.height(), 1.0);
  double max_delta = 0.0;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    const double d = std::abs(depth[k] - unbiased[k]);
    if (!std::isfinite(d)) throw InputError("depth_weight_map: non-finite depth discrepancy");
    max_delta = std::max(max_delta, d);
  }
  if (max_delta == 0.0) return w;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    w[k] = std::clamp(1.0 - std::abs(depth[k] - unbiased[k]) / max_delta, 0.0, 1.0);
  }
  return w;
}

inline RegionMask trust_region(const ScalarField& weight, double theta) {
  RegionMask out(weight.width(), weight.height(), RegionLabel::Trust);
  for (std::size_t k = 0; k < weight.size(); ++k) out[k] = weight[k] >= theta ? 1 : 0;
  return out;
}

}  // namespace surfcon
