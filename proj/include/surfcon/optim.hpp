#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "surfcon/geometry.hpp"
#include "surfcon/grid.hpp"
#include "surfcon/mv_loss.hpp"
#include "surfcon/parallel.hpp"
#include "surfcon/partition.hpp"
#include "surfcon/sv_loss.hpp"
#include "surfcon/synth.hpp"

namespace surfcon {

enum class GradientMode { FiniteDifference, Analytic };
enum class UpdateRule { Gradient, Proximal };

inline const char* to_string(GradientMode m) {
  return m == GradientMode::Analytic ? "analytic" : "finite-difference";
}

struct OptimConfig {
  SvConfig sv;
  MvConfig mv;
  double step = 300.0;              ///< normal step
  double depth_step_scale = 1e-5;   ///< log-depth step = step * depth_step_scale
  UpdateRule update = UpdateRule::Proximal;
  int iterations = 200;
  double lambda_data = 0.5;
  GradientMode mode = GradientMode::Analytic;
  double fd_step = 1e-4;  ///< relative: probes move log-depth and normal components by this much
  bool use_svgeo = true;
  bool use_mvgeo = true;  ///< also off when mv.samples == 0
  int threads = 1;

  void validate() const {
    sv.validate();
    mv.validate();
    if (!(step > 0) || !std::isfinite(step)) throw InputError("step size must be positive");
    if (!(depth_step_scale >= 0) || !std::isfinite(depth_step_scale)) {
      throw InputError("depth_step_scale must be >= 0");
    }
    if (iterations < 1) throw InputError("iterations must be >= 1");
    if (!(lambda_data >= 0)) throw InputError("lambda_data must be >= 0");
    if (!(fd_step > 0)) throw InputError("fd_step must be positive");
    if (threads < 1) throw InputError("threads must be >= 1");
  }

  bool mv_enabled() const { return use_mvgeo && mv.samples > 0; }
};

/// Per-term totals summed over views. `total` applies the weights:
/// lambda_data * data + sum(l_svgeo) + lambda3 * mvgeo.
struct LossTerms {
  double total = 0.0;
  double data = 0.0;
  double svn = 0.0;
  double cross = 0.0;
  double tv = 0.0;
  double mvgeo = 0.0;
};

struct ViewState {
  ScalarField log_depth;
  VectorField normals;

  ScalarField depth() const {
    ScalarField z(log_depth.width(), log_depth.height());
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = std::exp(log_depth[k]);
    return z;
  }
};

struct OptimState {
  std::vector<ViewState> views;
  int iteration = 0;
  std::vector<LossTerms> history;
};

/// Starting point: observed depth and normals.
inline OptimState initial_state(const std::vector<ViewBundle>& observed) {
  OptimState s;
  for (const auto& b : observed) {
    ViewState v{ScalarField(b.depth.width(), b.depth.height()), b.normals};
    for (std::size_t k = 0; k < b.depth.size(); ++k) {
      if (!(b.depth[k] > 0)) throw InputError("observed depth must be positive");
      v.log_depth[k] = std::log(b.depth[k]);
    }
    s.views.push_back(std::move(v));
  }
  return s;
}

struct NeighborPlaneDepth {
  ScalarField depth;
  RegionMask invalid;  ///< no neighbor plane meets the pixel ray; depth copies z there
};

/// D^(p): mean over the 4-neighbors q of the depth at which q's tangent plane
/// z_q (n_q . r_q) = n_q . X meets the ray r_p.
inline NeighborPlaneDepth neighbor_plane_depth(const ScalarField& z, const VectorField& normals, const Camera& cam) {
  require_same_shape(z, normals, "neighbor_plane_depth");
  const int w = z.width(), h = z.height();
  NeighborPlaneDepth out{ScalarField(w, h), RegionMask(w, h, RegionLabel::Invalid)};
  const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const Eigen::Vector3d rp = cam.ray(i, j);
      CompensatedSum sum;
      int k = 0;
      for (int q = 0; q < 4; ++q) {
        const int ii = i + di[q], jj = j + dj[q];
        if (!z.contains(ii, jj)) continue;
        const Eigen::Vector3d& n = normals(ii, jj);
        const double b = n.dot(rp);
        if (std::abs(b) < 1e-6) continue;
        sum += z(ii, jj) * n.dot(cam.ray(ii, jj)) / b;
        ++k;
      }
      if (k == 0) {
        out.invalid.set(i, j);
        out.depth(i, j) = z(i, j);
      } else {
        out.depth(i, j) = sum.value() / k;
      }
    }
  }
  return out;
}

namespace detail {

/// Quantities derived from one view's parameters.
struct Derived {
  ScalarField z;
  DepthNormals nd;
  NeighborPlaneDepth dhat;
  ScalarField delta;
};

inline Derived derive(const ViewState& v, const Camera& cam) {
  Derived d;
  d.z = v.depth();
  d.nd = normal_from_depth(d.z, cam);
  d.dhat = neighbor_plane_depth(d.z, v.normals, cam);
  d.delta = discrepancy_field(d.z, d.dhat.depth);
  return d;
}

inline RegionMask invalid_union(const Derived& d) {
  RegionMask m(d.z.width(), d.z.height(), RegionLabel::Invalid);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = (d.nd.invalid[k] || d.dhat.invalid[k]) ? 1 : 0;
  return m;
}

}  // namespace detail

/// Weights, masks and samples frozen at one state. Gradients are taken with
/// the context held fixed; the reported loss always rebuilds it.
struct OptimContext {
  std::vector<SvRegions> sv;
  struct MvPair {
    std::size_t cur;
    std::size_t nbr;
    MvSampling sampling;
  };
  std::vector<MvPair> mv;
};

/// Observed data plus everything about it that never changes during a run.
class Problem {
 public:
  Problem(std::vector<ViewBundle> observed, OptimConfig cfg) : obs_(std::move(observed)), cfg_(cfg) {
    cfg_.validate();
    if (obs_.empty()) throw InputError("optimizer needs at least one view");
    for (const auto& b : obs_) {
      require_same_shape(b.depth, obs_.front().depth, "optimizer views");
      require_same_shape(b.rgb, b.depth, "optimizer view");
      b.cam.validate();
      double tau = 0.0;
      textures_.push_back(image_texture(b.rgb, cfg_.sv.percentile, &tau));
      taus_.push_back(tau);
    }
  }

  const std::vector<ViewBundle>& observed() const { return obs_; }
  const OptimConfig& config() const { return cfg_; }
  std::size_t views() const { return obs_.size(); }

  void check(const OptimState& s) const {
    if (s.views.size() != obs_.size()) throw InputError("state and observations disagree on view count");
    for (std::size_t v = 0; v < obs_.size(); ++v) {
      require_same_shape(s.views[v].log_depth, obs_[v].depth, "optimizer state");
      require_same_shape(s.views[v].normals, obs_[v].depth, "optimizer state");
    }
  }

  OptimContext context(const OptimState& s) const {
    check(s);
    std::vector<detail::Derived> d;
    for (std::size_t v = 0; v < views(); ++v) d.push_back(detail::derive(s.views[v], obs_[v].cam));
    return context(d);
  }

  /// Loss with the context rebuilt at `s`.
  LossTerms loss(const OptimState& s) const {
    check(s);
    std::vector<detail::Derived> d;
    for (std::size_t v = 0; v < views(); ++v) d.push_back(detail::derive(s.views[v], obs_[v].cam));
    return evaluate(s, d, context(d));
  }

  /// Loss with a frozen context.
  LossTerms loss(const OptimState& s, const OptimContext& ctx) const {
    std::vector<detail::Derived> d;
    for (std::size_t v = 0; v < views(); ++v) d.push_back(detail::derive(s.views[v], obs_[v].cam));
    return evaluate(s, d, ctx);
  }

  struct Gradient {
    std::vector<ScalarField> log_depth;
    std::vector<VectorField> normals;
  };

  Gradient gradient(const OptimState& s, const OptimContext& ctx) const {
    return cfg_.mode == GradientMode::Analytic ? analytic_gradient(s, ctx) : fd_gradient(s, ctx);
  }

  /// Central differences of the frozen-context loss over every parameter.
  Gradient fd_gradient(const OptimState& s, const OptimContext& ctx) const {
    Gradient g = zero_gradient();
    const std::size_t per_view = obs_.front().depth.size() * 4;
    const std::size_t n = per_view * views();
    const double h = cfg_.fd_step;
    parallel_for(n, cfg_.threads, [&](std::size_t lo, std::size_t hi) {
      OptimState probe = s;
      for (std::size_t p = lo; p < hi; ++p) {
        const std::size_t v = p / per_view, r = p % per_view;
        const std::size_t pix = r / 4;
        const int comp = static_cast<int>(r % 4);
        double& x = comp == 0 ? probe.views[v].log_depth[pix] : probe.views[v].normals[pix][comp - 1];
        const double x0 = x;
        x = x0 + h;
        const double fp = loss(probe, ctx).total;
        x = x0 - h;
        const double fm = loss(probe, ctx).total;
        x = x0;
        const double gv = (fp - fm) / (2 * h);
        if (comp == 0) g.log_depth[v][pix] = gv; else g.normals[v][pix][comp - 1] = gv;
      }
    });
    return g;
  }

  /// Exact chain rule for the data and single-view terms; the cross-view term
  /// uses central differences on the log-depths of each sampled patch.
  Gradient analytic_gradient(const OptimState& s, const OptimContext& ctx) const {
    Gradient g = zero_gradient();
    const std::size_t nv = views();
    std::vector<detail::Derived> d;
    for (std::size_t v = 0; v < nv; ++v) d.push_back(detail::derive(s.views[v], obs_[v].cam));

    for (std::size_t v = 0; v < nv; ++v) {
      const Camera& cam = obs_[v].cam;
      const int w = d[v].z.width(), h = d[v].z.height();
      ScalarField g_z(w, h);
      VectorField& g_n = g.normals[v];
      const double inv_n = 1.0 / static_cast<double>(g_z.size());
      for (std::size_t k = 0; k < g_z.size(); ++k) {
        g_z[k] += cfg_.lambda_data * sign0(d[v].z[k] - obs_[v].depth[k]) * inv_n;
      }
      if (cfg_.use_svgeo) {
        const SvGradients sg =
            svgeo_gradients(ctx.sv[v], d[v].nd.normals, s.views[v].normals, d[v].delta, obs_[v].rgb, cfg_.sv);
        for (std::size_t k = 0; k < g_n.size(); ++k) g_n[k] += sg.d_normals[k];
        backprop_discrepancy(d[v], s.views[v].normals, cam, sg.d_discrepancy, g_z, g_n);
        backprop_depth_normals(d[v], cam, sg.d_depth_normals, g_z);
      }
      for (std::size_t k = 0; k < g_z.size(); ++k) g.log_depth[v][k] += d[v].z[k] * g_z[k];
    }

    if (cfg_.mv_enabled() && cfg_.mv.lambda3 != 0.0) {
      for (const auto& pair : ctx.mv) mv_patch_gradient(s, pair, g);
    }
    return g;
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (const auto& b : obs_) {
      g.log_depth.emplace_back(b.depth.width(), b.depth.height());
      g.normals.emplace_back(b.depth.width(), b.depth.height());
    }
    return g;
  }

 private:
  OptimContext context(const std::vector<detail::Derived>& d) const {
    OptimContext ctx;
    for (std::size_t v = 0; v < views(); ++v) {
      const RegionMask invalid = detail::invalid_union(d[v]);
      ctx.sv.push_back(sv_regions(d[v].z, d[v].dhat.depth, textures_[v], taus_[v], cfg_.sv, &invalid));
    }
    if (cfg_.mv_enabled() && views() > 1) {
      for (std::size_t c = 0; c < views(); ++c) {
        const std::size_t n = neighbor_of(c);
        const MvView cur{d[c].z, d[c].z, d[c].dhat.depth, obs_[c].cam};
        const MvView nbr{d[n].z, d[n].z, d[n].dhat.depth, obs_[n].cam};
        const VectorField pts = backproject_depth(d[c].z, obs_[c].cam);
        ctx.mv.push_back({c, n, mv_sampling(cur, nbr, pts, cfg_.mv)});
      }
    }
    return ctx;
  }

  /// Nearest other camera center.
  std::size_t neighbor_of(std::size_t c) const {
    std::size_t best = c;
    double best_d = 0.0;
    for (std::size_t v = 0; v < views(); ++v) {
      if (v == c) continue;
      const double dist = (obs_[v].cam.pose.center() - obs_[c].cam.pose.center()).norm();
      if (best == c || dist < best_d) {
        best = v;
        best_d = dist;
      }
    }
    return best;
  }

  LossTerms evaluate(const OptimState& s, const std::vector<detail::Derived>& d, const OptimContext& ctx) const {
    LossTerms t;
    CompensatedSum data, svgeo;
    for (std::size_t v = 0; v < views(); ++v) {
      CompensatedSum dv;
      for (std::size_t k = 0; k < d[v].z.size(); ++k) dv += std::abs(d[v].z[k] - obs_[v].depth[k]);
      data += dv.value() / static_cast<double>(d[v].z.size());
      if (cfg_.use_svgeo) {
        const SvLossReport r =
            svgeo_loss(ctx.sv[v], d[v].nd.normals, s.views[v].normals, d[v].delta, obs_[v].rgb, cfg_.sv);
        t.svn += r.l_svn;
        t.cross += r.l_cross;
        t.tv += r.tv_normal;
        svgeo += r.l_svgeo;
      }
    }
    t.data = data.value();
    CompensatedSum mv;
    for (const auto& pair : ctx.mv) {
      const VectorField pts_cur = backproject_depth(d[pair.cur].z, obs_[pair.cur].cam);
      mv += mv_pair_loss(pts_cur, d[pair.nbr].z, pair);
    }
    t.mvgeo = mv.value();
    t.total = cfg_.lambda_data * t.data + svgeo.value() + cfg_.mv.lambda3 * t.mvgeo;
    return t;
  }

  double mv_pair_loss(const VectorField& pts_cur, const ScalarField& z_nbr, const OptimContext::MvPair& pair) const {
    if (pair.sampling.samples.pixels.empty()) return 0.0;
    const Camera& cc = obs_[pair.cur].cam;
    const Camera& cn = obs_[pair.nbr].cam;
    const VectorField nbr_in_cur = transform_points(backproject_depth(z_nbr, cn), cn.pose, cc.pose);
    const Pose rel = cc.pose * cn.pose.inverse();
    return mv_patch_loss(pts_cur, nbr_in_cur, rel.translation, pair.sampling.samples.pixels).loss;
  }

  /// Chains dL/d(delta) through delta = z - D^(z, N).
  static void backprop_discrepancy(const detail::Derived& d, const VectorField& normals, const Camera& cam,
                                   const ScalarField& g_delta, ScalarField& g_z, VectorField& g_n) {
    const int w = d.z.width(), h = d.z.height();
    const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const double gd = g_delta(i, j);
        if (gd == 0.0 || d.dhat.invalid.test(i, j)) continue;
        g_z(i, j) += gd;
        const Eigen::Vector3d rp = cam.ray(i, j);
        int k = 0;
        for (int q = 0; q < 4; ++q) {
          const int ii = i + di[q], jj = j + dj[q];
          if (d.z.contains(ii, jj) && std::abs(normals(ii, jj).dot(rp)) >= 1e-6) ++k;
        }
        const double gh = -gd / k;
        for (int q = 0; q < 4; ++q) {
          const int ii = i + di[q], jj = j + dj[q];
          if (!d.z.contains(ii, jj)) continue;
          const Eigen::Vector3d& n = normals(ii, jj);
          const Eigen::Vector3d rq = cam.ray(ii, jj);
          const double b = n.dot(rp);
          if (std::abs(b) < 1e-6) continue;
          const double a = n.dot(rq);
          g_z(ii, jj) += gh * a / b;
          g_n(ii, jj) += gh * d.z(ii, jj) * (rq * b - a * rp) / (b * b);
        }
      }
    }
  }

  /// Chains dL/dN_d through the normalized cross product of depth tangents.
  static void backprop_depth_normals(const detail::Derived& d, const Camera& cam, const VectorField& g_nd,
                                     ScalarField& g_z) {
    const int w = d.z.width(), h = d.z.height();
    for (int i = 0; i < h; ++i) {
      const auto sv = detail::axis_stencil(i, h);
      for (int j = 0; j < w; ++j) {
        const Eigen::Vector3d& gn = g_nd(i, j);
        if (gn.isZero(0.0) || d.nd.invalid.test(i, j)) continue;
        const auto su = detail::axis_stencil(j, w);
        const Eigen::Vector3d ru_hi = cam.ray(i, su.hi), ru_lo = cam.ray(i, su.lo);
        const Eigen::Vector3d rv_hi = cam.ray(sv.hi, j), rv_lo = cam.ray(sv.lo, j);
        const Eigen::Vector3d du = (d.z(i, su.hi) * ru_hi - d.z(i, su.lo) * ru_lo) * su.scale;
        const Eigen::Vector3d dv = (d.z(sv.hi, j) * rv_hi - d.z(sv.lo, j) * rv_lo) * sv.scale;
        const Eigen::Vector3d c = du.cross(dv);
        const double len = c.norm();
        const Eigen::Vector3d nhat = c / len;
        const double sigma = d.nd.normals(i, j).dot(nhat) < 0 ? -1.0 : 1.0;
        const Eigen::Vector3d g_c = sigma * (gn - nhat * nhat.dot(gn)) / len;
        const Eigen::Vector3d g_du = dv.cross(g_c);
        const Eigen::Vector3d g_dv = g_c.cross(du);
        g_z(i, su.hi) += su.scale * ru_hi.dot(g_du);
        g_z(i, su.lo) -= su.scale * ru_lo.dot(g_du);
        g_z(sv.hi, j) += sv.scale * rv_hi.dot(g_dv);
        g_z(sv.lo, j) -= sv.scale * rv_lo.dot(g_dv);
      }
    }
  }

  /// Cross-view term: each accepted patch pair depends on 9 log-depths per
  /// view, so central differences stay local and cheap.
  void mv_patch_gradient(const OptimState& s, const OptimContext::MvPair& pair, Gradient& g) const {
    const auto& samples = pair.sampling.samples.pixels;
    if (samples.empty()) return;
    const Camera& cc = obs_[pair.cur].cam;
    const Camera& cn = obs_[pair.nbr].cam;
    const Pose rel = cc.pose * cn.pose.inverse();
    const ScalarField& uc = s.views[pair.cur].log_depth;
    const ScalarField& un = s.views[pair.nbr].log_depth;

    auto patch = [](const ScalarField& u, const Camera& cam, Pixel px, const Pose* to_cur) {
      std::vector<Eigen::Vector3d> pts;
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          Eigen::Vector3d p = std::exp(u(px.i + di, px.j + dj)) * cam.ray(px.i + di, px.j + dj);
          if (to_cur) p = to_cur->apply(p);
          pts.push_back(p);
        }
      }
      return pts;
    };
    auto term = [&](const std::vector<Eigen::Vector3d>& pc, const std::vector<Eigen::Vector3d>& pn) {
      const auto a = fit_patch(pc, Eigen::Vector3d::Zero());
      const auto b = fit_patch(pn, rel.translation);
      if (!a || !b) return 0.0;
      return patch_consistency(a->normal, b->normal, a->curvature_weight);
    };

    // Accepted-pair count fixes the normalization.
    std::size_t accepted = 0;
    std::vector<std::vector<Eigen::Vector3d>> pcs, pns;
    for (const auto& px : samples) {
      pcs.push_back(patch(uc, cc, px, nullptr));
      pns.push_back(patch(un, cn, px, &rel));
      if (fit_patch(pcs.back(), Eigen::Vector3d::Zero()) && fit_patch(pns.back(), rel.translation)) ++accepted;
    }
    if (accepted == 0) return;
    const double scale = cfg_.mv.lambda3 / static_cast<double>(accepted);
    const double h = cfg_.fd_step;

    for (std::size_t k = 0; k < samples.size(); ++k) {
      const Pixel px = samples[k];
      if (!fit_patch(pcs[k], Eigen::Vector3d::Zero()) || !fit_patch(pns[k], rel.translation)) continue;
      for (int side = 0; side < 2; ++side) {
        const ScalarField& u = side == 0 ? uc : un;
        const Camera& cam = side == 0 ? cc : cn;
        ScalarField& gu = g.log_depth[side == 0 ? pair.cur : pair.nbr];
        for (int m = 0; m < 9; ++m) {
          const int i = px.i + m / 3 - 1, j = px.j + m % 3 - 1;
          const Eigen::Vector3d r = cam.ray(i, j);
          auto moved = side == 0 ? pcs[k] : pns[k];
          Eigen::Vector3d p_plus = std::exp(u(i, j) + h) * r, p_minus = std::exp(u(i, j) - h) * r;
          if (side == 1) {
            p_plus = rel.apply(p_plus);
            p_minus = rel.apply(p_minus);
          }
          moved[m] = p_plus;
          const double fp = side == 0 ? term(moved, pns[k]) : term(pcs[k], moved);
          moved[m] = p_minus;
          const double fm = side == 0 ? term(moved, pns[k]) : term(pcs[k], moved);
          gu(i, j) += scale * (fp - fm) / (2 * h);
        }
      }
    }
  }

  std::vector<ViewBundle> obs_;
  OptimConfig cfg_;
  std::vector<TexturePartition> textures_;
  std::vector<double> taus_;
};

/// Loss of `state` against observed bundles, context rebuilt from the state.
inline LossTerms total_loss(const OptimState& state, const std::vector<ViewBundle>& observed, const OptimConfig& cfg) {
  return Problem(observed, cfg).loss(state);
}

namespace detail {

/// Normal update: descent on the smooth terms, then (proximal rule) the
/// weighted L1 agreement term through its soft-threshold map toward N_d.
inline void update_normals(OptimState& next, const OptimState& state, const Problem& problem,
                           const OptimContext& ctx, Problem::Gradient& g) {
  const OptimConfig& cfg = problem.config();
  const bool prox = cfg.update == UpdateRule::Proximal && cfg.use_svgeo;
  for (std::size_t v = 0; v < state.views.size(); ++v) {
    VectorField nd;
    ScalarField thr(state.views[v].normals.width(), state.views[v].normals.height());
    if (prox) {
      nd = normal_from_depth(state.views[v].depth(), problem.observed()[v].cam).normals;
      const SvRegions& reg = ctx.sv[v];
      const auto n_rt = reg.rich_trust.count();
      for (std::size_t k = 0; k < nd.size() && n_rt > 0; ++k) {
        if (!reg.rich_trust[k]) continue;
        const double wk = reg.weight[k] / static_cast<double>(n_rt);
        const Eigen::Vector3d diff = nd[k] - state.views[v].normals[k];
        g.normals[v][k] += wk * Eigen::Vector3d(sign0(diff.x()), sign0(diff.y()), sign0(diff.z()));
        thr[k] = cfg.step * wk;
      }
    }
    auto& vs = next.views[v];
    for (std::size_t k = 0; k < vs.normals.size(); ++k) {
      Eigen::Vector3d n = state.views[v].normals[k] - cfg.step * g.normals[v][k];
      if (thr[k] > 0) {
        for (int c = 0; c < 3; ++c) {
          const double r = n[c] - nd[k][c];
          n[c] = nd[k][c] + std::copysign(std::max(std::abs(r) - thr[k], 0.0), r);
        }
      }
      const double len = n.norm();
      if (!(len > 0) || !std::isfinite(len)) {
        throw NumericalError("normal update diverged at view " + std::to_string(v) + " pixel index " +
                             std::to_string(k) + " in iteration " + std::to_string(state.iteration + 1) +
                             "; last good iteration " + std::to_string(state.iteration));
      }
      vs.normals[k] = n / len;
    }
  }
}

inline void update_depths(OptimState& next, const OptimState& state, const Problem& problem,
                          const Problem::Gradient& g) {
  const OptimConfig& cfg = problem.config();
  const double depth_step = cfg.step * cfg.depth_step_scale;
  for (std::size_t v = 0; v < state.views.size(); ++v) {
    auto& vs = next.views[v];
    for (std::size_t k = 0; k < vs.log_depth.size(); ++k) {
      vs.log_depth[k] = state.views[v].log_depth[k] - depth_step * g.log_depth[v][k];
      if (!std::isfinite(vs.log_depth[k]) || std::abs(vs.log_depth[k]) > 700) {
        throw NumericalError("depth update diverged at view " + std::to_string(v) + " pixel index " +
                             std::to_string(k) + " in iteration " + std::to_string(state.iteration + 1) +
                             "; last good iteration " + std::to_string(state.iteration));
      }
    }
  }
}

}  // namespace detail

/// One descent update: normals first (renormalized), then log-depth with the
/// gradient taken at the updated normals. Appends the loss of the new state
/// to the history.
inline OptimState step(const OptimState& state, const Problem& problem) {
  const OptimContext ctx = problem.context(state);
  auto g = problem.gradient(state, ctx);
  OptimState next = state;
  detail::update_normals(next, state, problem, ctx, g);
  if (problem.config().depth_step_scale > 0) {
    // Depth sees the updated normals (block Gauss-Seidel).
    const OptimContext ctx2 = problem.context(next);
    const auto g2 = problem.gradient(next, ctx2);
    detail::update_depths(next, next, problem, g2);
  }
  next.iteration = state.iteration + 1;
  const LossTerms t = problem.loss(next);
  if (!std::isfinite(t.total)) {
    throw NumericalError("non-finite loss at iteration " + std::to_string(next.iteration) +
                         "; last good iteration " + std::to_string(state.iteration));
  }
  next.history.push_back(t);
  return next;
}

/// RMS angular error in degrees over every pixel of every view.
inline double normal_rms_deg(const OptimState& s, const std::vector<ViewBundle>& truth) {
  CompensatedSum sum;
  std::size_t n = 0;
  for (std::size_t v = 0; v < s.views.size(); ++v) {
    for (std::size_t k = 0; k < s.views[v].normals.size(); ++k) {
      const double c = std::clamp(s.views[v].normals[k].normalized().dot(truth[v].normals[k]), -1.0, 1.0);
      const double a = std::atan2(s.views[v].normals[k].normalized().cross(truth[v].normals[k]).norm(), c);
      sum += a * a;
      ++n;
    }
  }
  return std::sqrt(sum.value() / static_cast<double>(n)) * 180.0 / std::numbers::pi;
}

inline double depth_rms(const OptimState& s, const std::vector<ViewBundle>& truth) {
  CompensatedSum sum;
  std::size_t n = 0;
  for (std::size_t v = 0; v < s.views.size(); ++v) {
    const ScalarField z = s.views[v].depth();
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double e = z[k] - truth[v].depth[k];
      sum += e * e;
      ++n;
    }
  }
  return std::sqrt(sum.value() / static_cast<double>(n));
}

struct OptimResult {
  OptimState state;
  LossTerms initial;
  std::optional<double> normal_rms_initial, normal_rms_final;
  std::optional<double> depth_rms_initial, depth_rms_final;
};

/// Runs cfg.iterations descent steps from the observed state. Ground truth,
/// when given, only feeds the error metrics.
inline OptimResult optimize(const std::vector<ViewBundle>& observed, const OptimConfig& cfg,
                            const std::vector<ViewBundle>* truth = nullptr) {
  const Problem problem(observed, cfg);
  OptimResult r;
  r.state = initial_state(observed);
  r.initial = problem.loss(r.state);
  if (!std::isfinite(r.initial.total)) throw NumericalError("non-finite loss at the initial state");
  if (truth) {
    r.normal_rms_initial = normal_rms_deg(r.state, *truth);
    r.depth_rms_initial = depth_rms(r.state, *truth);
  }
  for (int it = 0; it < cfg.iterations; ++it) r.state = step(r.state, problem);
  if (truth) {
    r.normal_rms_final = normal_rms_deg(r.state, *truth);
    r.depth_rms_final = depth_rms(r.state, *truth);
  }
  return r;
}

}  // namespace surfcon
