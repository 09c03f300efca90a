#pragma once

#include <chrono>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "surfcon/geometry.hpp"
#include "surfcon/mv_loss.hpp"
#include "surfcon/optim.hpp"
#include "surfcon/sv_loss.hpp"
#include "surfcon/synth.hpp"

namespace surfcon {

/// Where the single-view loss takes N_d from when scoring bundles.
enum class DepthNormalSource {
  FromDepth,    ///< finite-difference normals of the bundle depth
  FromNormals,  ///< the bundle's own normals (analytic at ground truth)
};

struct BundleLoss {
  std::vector<SvLossReport> sv;  ///< one per view
  std::vector<MvReport> mv;      ///< one per view as current, empty when S = 0
};

/// Nearest other camera center; the view itself when it is alone.
inline std::size_t nearest_view(const std::vector<ViewBundle>& views, std::size_t c) {
  std::size_t best = c;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (v == c) continue;
    const double d = (views[v].cam.pose.center() - views[c].cam.pose.center()).norm();
    if (d < best_d) {
      best = v;
      best_d = d;
    }
  }
  return best;
}

/// Scores stored bundles: D from depth, D^ from plane distance and normals.
inline BundleLoss bundle_loss(const std::vector<ViewBundle>& views, const SvConfig& sv, const MvConfig& mv,
                              DepthNormalSource nd_source = DepthNormalSource::FromDepth) {
  sv.validate();
  mv.validate();
  if (views.empty()) throw InputError("no views to score");
  BundleLoss out;
  std::vector<ScalarField> unbiased;
  for (const auto& b : views) {
    const UnbiasedDepth ud = unbiased_depth(b.plane_distance, b.normals, b.cam);
    RegionMask invalid = ud.invalid;
    VectorField nd = b.normals;
    if (nd_source == DepthNormalSource::FromDepth) {
      const DepthNormals dn = normal_from_depth(b.depth, b.cam);
      nd = dn.normals;
      for (std::size_t k = 0; k < invalid.size(); ++k) invalid[k] = (invalid[k] || dn.invalid[k]) ? 1 : 0;
    }
    // Invalid D^ pixels carry D so they do not inflate the discrepancy maximum.
    ScalarField dhat = ud.depth;
    for (std::size_t k = 0; k < dhat.size(); ++k) {
      if (ud.invalid[k]) dhat[k] = b.depth[k];
    }
    out.sv.push_back(svgeo_loss(SvInputs{nd, b.normals, b.depth, dhat, b.rgb, &invalid}, sv));
    unbiased.push_back(std::move(dhat));
  }
  if (mv.samples > 0 && views.size() > 1) {
    for (std::size_t c = 0; c < views.size(); ++c) {
      const std::size_t n = nearest_view(views, c);
      out.mv.push_back(mvgeo_loss(MvView{views[c].depth, views[c].depth, unbiased[c], views[c].cam},
                                  MvView{views[n].depth, views[n].depth, unbiased[n], views[n].cam}, mv));
    }
  }
  return out;
}

inline double max_sv_term(const BundleLoss& l) {
  double m = 0.0;
  for (const auto& r : l.sv) m = std::max({m, r.l_svn, r.l_cross, r.tv_normal, r.l_svgeo});
  return m;
}

inline double max_mv_term(const BundleLoss& l) {
  double m = 0.0;
  for (const auto& r : l.mv) m = std::max(m, r.loss);
  return m;
}

inline double sum_mv(const BundleLoss& l) {
  double s = 0.0;
  for (const auto& r : l.mv) s += r.loss;
  return s;
}

enum class SweepParam { Theta, Percentile, S, Lambda3 };

inline SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "theta") return SweepParam::Theta;
  if (s == "percentile") return SweepParam::Percentile;
  if (s == "S" || s == "s") return SweepParam::S;
  if (s == "lambda3") return SweepParam::Lambda3;
  throw InputError("unknown sweep parameter '" + s + "' (expected theta, percentile, S or lambda3)");
}

inline const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::Theta: return "theta";
    case SweepParam::Percentile: return "percentile";
    case SweepParam::S: return "S";
    case SweepParam::Lambda3: return "lambda3";
  }
  return "theta";
}

inline OptimConfig with_param(OptimConfig cfg, SweepParam p, double value) {
  switch (p) {
    case SweepParam::Theta: cfg.sv.theta = value; break;
    case SweepParam::Percentile: cfg.sv.percentile = value; break;
    case SweepParam::S:
      if (!(value >= 0) || value != std::floor(value)) throw InputError("S values must be non-negative integers");
      cfg.mv.samples = static_cast<int>(value);
      break;
    case SweepParam::Lambda3: cfg.mv.lambda3 = value; break;
  }
  cfg.validate();
  return cfg;
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  LossTerms losses;             ///< final
  std::size_t n_trust = 0;      ///< |H| summed over views at the initial state
  std::size_t n_sampled = 0;    ///< sampled pixels summed over views at the initial state
  std::optional<double> normal_rms_deg;
  std::optional<double> depth_rms;
  double wall_time_s = 0.0;     ///< fastest of the repeats
};

/// One sweep point: a full optimization with the parameter overridden.
inline SweepRow sweep_point(const std::vector<ViewBundle>& observed, const std::vector<ViewBundle>* truth,
                            const OptimConfig& base, SweepParam p, double value, int repeats = 1) {
  const OptimConfig cfg = with_param(base, p, value);
  SweepRow row;
  row.param = to_string(p);
  row.value = value;
  {
    const Problem problem(observed, cfg);
    const OptimState s0 = initial_state(observed);
    const OptimContext ctx = problem.context(s0);
    for (const auto& r : ctx.sv) row.n_trust += r.trust.count();
    for (const auto& m : ctx.mv) row.n_sampled += m.sampling.samples.pixels.size();
  }
  row.wall_time_s = std::numeric_limits<double>::infinity();
  for (int k = 0; k < std::max(repeats, 1); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const OptimResult res = optimize(observed, cfg, truth);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    row.wall_time_s = std::min(row.wall_time_s, dt);
    row.losses = res.state.history.back();
    row.normal_rms_deg = res.normal_rms_final;
    row.depth_rms = res.depth_rms_final;
  }
  return row;
}

}  // namespace surfcon
