#include <gtest/gtest.h>

#include "test_support.hpp"

namespace surfcon {
namespace {

SceneSpec fronto_plane(int size, double z) {
  SceneSpec s = make_scene(SurfaceKind::TiltedPlane, size);
  s.plane = PlaneParams{Eigen::Vector3d(0, 0, -1), -z};
  Pose shifted;
  shifted.translation = Eigen::Vector3d(-1, 0, 0);
  s.cameras[1] = make_camera(size, size, 90.0, shifted);
  return s;
}

TEST(Render, FrontoParallelPlane) {
  const auto views = render_scene(fronto_plane(8, 2.0));
  ASSERT_EQ(views.size(), 2u);
  for (const auto& b : views) {
    for (std::size_t k = 0; k < b.depth.size(); ++k) {
      EXPECT_NEAR(b.depth[k], 2.0, 1e-14);
      EXPECT_LT((b.normals[k] - Eigen::Vector3d(0, 0, -1)).norm(), 1e-14);
    }
  }
}

TEST(Render, PlaneDistanceReproducesDepth) {
  for (auto kind : {SurfaceKind::TiltedPlane, SurfaceKind::SphereCap, SurfaceKind::SineHeightfield}) {
    const auto views = render_scene(make_scene(kind, 64));
    for (const auto& b : views) {
      const auto ud = unbiased_depth(b.plane_distance, b.normals, b.cam);
      EXPECT_EQ(ud.invalid.count(), 0u) << to_string(kind);
      for (std::size_t k = 0; k < b.depth.size(); ++k) {
        ASSERT_NEAR(ud.depth[k], b.depth[k], 1e-9 * b.depth[k]) << to_string(kind);
        ASSERT_NEAR(b.normals[k].norm(), 1.0, 1e-12);
        ASSERT_LT(b.normals[k].dot(b.cam.ray(0, 0)), 1.0);
      }
    }
  }
}

TEST(Render, NormalsFaceTheCamera) {
  for (auto kind : {SurfaceKind::TiltedPlane, SurfaceKind::SphereCap, SurfaceKind::SineHeightfield}) {
    const auto views = render_scene(make_scene(kind, 24));
    for (const auto& b : views) {
      for (int i = 0; i < 24; ++i) {
        for (int j = 0; j < 24; ++j) ASSERT_LT(b.normals(i, j).dot(b.cam.ray(i, j)), 0.0);
      }
    }
  }
}

TEST(Render, SphereNormalsAreRadial) {
  const auto spec = make_scene(SurfaceKind::SphereCap, 16);
  const auto views = render_scene(spec);
  const auto& b = views[0];
  const auto pts = backproject_depth(b.depth, b.cam);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Eigen::Vector3d radial = (pts[k] - spec.sphere.center).normalized();
    EXPECT_LT((b.normals[k] - radial).norm(), 1e-9);
  }
}

TEST(Render, MissReportsPixel) {
  auto spec = make_scene(SurfaceKind::SphereCap, 16);
  spec.cameras[1].pose = look_at(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0, 0, -10));
  try {
    render_scene(spec);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("view 1 at pixel (0,0)"), std::string::npos) << e.what();
  }
}

TEST(Render, HalfCheckerRichSetSitsInCheckerHalf) {
  const auto views = render_scene(make_scene(SurfaceKind::TiltedPlane, 64, TextureKind::HalfCheckerHalfFlat));
  const auto part = image_texture(views[0].rgb, 75.0);
  std::size_t left = 0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 32; ++j) left += part.rich.test(i, j);
  }
  ASSERT_GT(part.rich.count(), 0u);
  EXPECT_GE(static_cast<double>(left) / static_cast<double>(part.rich.count()), 0.9);
}

TEST(Render, FlatTextureIsAllTied) {
  const auto views = render_scene(make_scene(SurfaceKind::TiltedPlane, 16, TextureKind::Flat));
  double tau = -1;
  const auto part = image_texture(views[0].rgb, 75.0, &tau);
  EXPECT_EQ(tau, 0.0);
  EXPECT_EQ(part.rich.count(), part.rich.size());
}

TEST(Corrupt, ZeroSigmaIsIdentity) {
  const auto b = render_scene(make_scene(SurfaceKind::SineHeightfield, 16))[0];
  const auto c = corrupt(b, 0.0, 0.0, 5);
  for (std::size_t k = 0; k < b.depth.size(); ++k) {
    EXPECT_EQ(c.depth[k], b.depth[k]);
    EXPECT_EQ(c.normals[k], b.normals[k]);
    EXPECT_EQ(c.plane_distance[k], b.plane_distance[k]);
  }
}

TEST(Corrupt, DepthNoiseHalfNormalMean) {
  const auto b = render_scene(make_scene(SurfaceKind::TiltedPlane, 64))[0];
  const double sigma = 0.02;
  const auto c = corrupt(b, sigma, 0.0, 77);
  double mean = 0;
  for (std::size_t k = 0; k < b.depth.size(); ++k) mean += std::abs(c.depth[k] - b.depth[k]);
  const double n = static_cast<double>(b.depth.size());
  mean /= n;
  const double expect = sigma * std::sqrt(2.0 / std::numbers::pi);
  const double se = sigma * std::sqrt(1.0 - 2.0 / std::numbers::pi) / std::sqrt(n);
  EXPECT_NEAR(mean, expect, 3 * se);
}

TEST(Corrupt, NormalNoiseAngle) {
  const auto b = render_scene(make_scene(SurfaceKind::TiltedPlane, 64))[0];
  const auto c = corrupt(b, 0.0, 5.0, 3);
  double sq = 0;
  for (std::size_t k = 0; k < b.normals.size(); ++k) {
    ASSERT_NEAR(c.normals[k].norm(), 1.0, 1e-12);
    const double a = testing::angle_between(c.normals[k], b.normals[k]) * 180.0 / std::numbers::pi;
    sq += a * a;
  }
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(b.normals.size())), 5.0, 0.25);
}

TEST(Corrupt, Deterministic) {
  auto spec = make_scene(SurfaceKind::SineHeightfield, 24);
  spec.noise = {0.02, 5.0};
  spec.seed = 42;
  const auto a = render_observed(spec), b = render_observed(spec);
  for (std::size_t v = 0; v < a.size(); ++v) {
    for (std::size_t k = 0; k < a[v].depth.size(); ++k) {
      ASSERT_EQ(a[v].depth[k], b[v].depth[k]);
      ASSERT_EQ(a[v].normals[k], b[v].normals[k]);
      ASSERT_EQ(a[v].plane_distance[k], b[v].plane_distance[k]);
    }
  }
  spec.seed = 43;
  const auto c = render_observed(spec);
  EXPECT_NE(a[0].depth[5], c[0].depth[5]);
}

TEST(Corrupt, ViewsUseDistinctStreams) {
  auto spec = fronto_plane(16, 5.0);
  spec.noise = {0.02, 0.0};
  const auto v = render_observed(spec);
  EXPECT_NE(v[0].depth[0] - 5.0, v[1].depth[0] - 5.0);
}

TEST(SceneSpec, Validation) {
  auto spec = make_scene(SurfaceKind::SphereCap, 8);
  spec.sphere.radius = -1;
  EXPECT_THROW(render_scene(spec), InputError);
  spec = make_scene(SurfaceKind::TiltedPlane, 8);
  spec.noise.depth_sigma = -0.1;
  EXPECT_THROW(spec.validate(), InputError);
  EXPECT_THROW(make_scene(SurfaceKind::TiltedPlane, 8, TextureKind::Checker, -1.0), InputError);
}

}  // namespace
}  // namespace surfcon
