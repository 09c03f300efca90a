#include <gtest/gtest.h>

#include "test_support.hpp"

namespace surfcon {
namespace {

using testing::unit_camera;

TEST(Backproject, PrincipalRay) {
  const auto pts = backproject_depth(ScalarField(1, 1, 1.0), unit_camera(1, 1));
  EXPECT_TRUE(pts[0].isApprox(Eigen::Vector3d(0, 0, 1)));
  const auto pts2 = backproject_depth(ScalarField(1, 1, 2.0), unit_camera(1, 1));
  EXPECT_TRUE(pts2[0].isApprox(Eigen::Vector3d(0, 0, 2)));
}

TEST(Backproject, CornerPixel) {
  const auto pts = backproject_depth(ScalarField(3, 3, 1.0), unit_camera(3, 3, 100.0, 1.0, 1.0));
  EXPECT_NEAR(pts(0, 0).x(), -0.01, 1e-15);
  EXPECT_NEAR(pts(0, 0).y(), -0.01, 1e-15);
  EXPECT_DOUBLE_EQ(pts(0, 0).z(), 1.0);
}

TEST(Backproject, RejectsNonPositiveDepth) {
  ScalarField d(4, 3, 1.0);
  d(2, 1) = 0.0;
  try {
    backproject_depth(d, unit_camera(4, 3));
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("(2,1)"), std::string::npos) << e.what();
  }
}

TEST(UnbiasedDepth, FrontoParallel) {
  const auto ud = unbiased_depth(ScalarField(1, 1, 3.0), VectorField(1, 1, Eigen::Vector3d(0, 0, 1)), unit_camera(1, 1));
  EXPECT_DOUBLE_EQ(ud.depth[0], 3.0);
  EXPECT_FALSE(ud.invalid[0]);
}

TEST(UnbiasedDepth, OffAxisPixel) {
  // Pixel (0,1) has ray (1,0,1).
  const auto ud = unbiased_depth(ScalarField(2, 1, 2.0), VectorField(2, 1, Eigen::Vector3d(0, 0, 1)), unit_camera(2, 1));
  EXPECT_DOUBLE_EQ(ud.depth(0, 1), 2.0);
}

TEST(UnbiasedDepth, GrazingIsInvalid) {
  const auto ud = unbiased_depth(ScalarField(1, 1, 2.0), VectorField(1, 1, Eigen::Vector3d(1, 0, 0)), unit_camera(1, 1));
  EXPECT_TRUE(ud.invalid[0]);
}

TEST(NormalFromDepth, FrontoParallelPlane) {
  const auto dn = normal_from_depth(ScalarField(6, 5, 4.0), unit_camera(6, 5, 5.0, 2.5, 2.0));
  for (std::size_t k = 0; k < dn.normals.size(); ++k) {
    EXPECT_TRUE(dn.normals[k].isApprox(Eigen::Vector3d(0, 0, -1), 1e-12));
    EXPECT_FALSE(dn.invalid[k]);
  }
}

TEST(NormalFromDepth, TiltedPlaneMatchesAnalyticNormal) {
  // Plane through (0,0,5) tilted 45 degrees about the image x axis.
  const Eigen::Vector3d n = Eigen::Vector3d(0, 1, -1).normalized();
  const Camera cam = unit_camera(9, 9, 10.0, 4.0, 4.0);
  ScalarField depth(9, 9);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) depth(i, j) = n.dot(Eigen::Vector3d(0, 0, 5)) / n.dot(cam.ray(i, j));
  }
  const auto dn = normal_from_depth(depth, cam);
  for (int i = 1; i < 8; ++i) {
    for (int j = 1; j < 8; ++j) EXPECT_LT((dn.normals(i, j) - n).norm(), 1e-3);
  }
}

TEST(NormalFromDepth, SinglePixelIsSentinel) {
  const auto dn = normal_from_depth(ScalarField(1, 1, 1.0), unit_camera(1, 1));
  EXPECT_EQ(dn.normals[0], Eigen::Vector3d::Zero());
  EXPECT_TRUE(dn.invalid[0]);
}

TEST(TransformPoints, SameFrameIsIdentity) {
  std::mt19937_64 gen(3);
  const Pose p = testing::random_pose(gen);
  VectorField pts(3, 2, Eigen::Vector3d(1, -2, 3));
  const auto out = transform_points(pts, p, p);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_LT((out[k] - pts[k]).norm(), 1e-12);
}

TEST(TransformPoints, PureTranslation) {
  Pose tn;
  tn.translation = Eigen::Vector3d(1, 2, 3);
  const auto out = transform_points(VectorField(1, 1, Eigen::Vector3d(4, 5, 6)), tn, Pose{});
  EXPECT_TRUE(out[0].isApprox(Eigen::Vector3d(3, 3, 3)));
}

TEST(TransformPoints, RotationAboutZ) {
  Pose tn;
  tn.rotation = Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const auto out = transform_points(VectorField(1, 1, Eigen::Vector3d(1, 0, 0)), tn, Pose{});
  EXPECT_LT((out[0] - Eigen::Vector3d(0, -1, 0)).norm(), 1e-15);
}

TEST(TransformPoints, RoundTrip) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int c = 0; c < 100; ++c) {
    const Pose a = testing::random_pose(gen), b = testing::random_pose(gen);
    VectorField pts(4, 4);
    for (std::size_t k = 0; k < pts.size(); ++k) pts[k] = Eigen::Vector3d(u(gen), u(gen), u(gen));
    const auto back = transform_points(transform_points(pts, a, b), b, a);
    for (std::size_t k = 0; k < pts.size(); ++k) ASSERT_LT((back[k] - pts[k]).norm(), 1e-9);
  }
}

TEST(TransformPoints, SentinelPassesThrough) {
  std::mt19937_64 gen(5);
  const auto out = transform_points(VectorField(2, 2), testing::random_pose(gen), testing::random_pose(gen));
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_EQ(out[k], Eigen::Vector3d::Zero());
}

TEST(ProjectPoint, PinholeFormula) {
  const auto a = project_point(Eigen::Vector3d(0, 0, 1), unit_camera(10, 10, 1.0, 5.0, 5.0));
  EXPECT_DOUBLE_EQ(a.u, 5.0);
  EXPECT_DOUBLE_EQ(a.v, 5.0);
  const auto b = project_point(Eigen::Vector3d(1, 0, 2), unit_camera(10, 10, 100.0, 0.0, 7.0));
  EXPECT_DOUBLE_EQ(b.u, 50.0);
  EXPECT_DOUBLE_EQ(b.v, 7.0);
  EXPECT_DOUBLE_EQ(b.z, 2.0);
}

TEST(ProjectPoint, BehindCameraStillProjects) {
  const auto p = project_point(Eigen::Vector3d(1, 1, -1), unit_camera(4, 4));
  EXPECT_DOUBLE_EQ(p.u, -1.0);
  EXPECT_DOUBLE_EQ(p.z, -1.0);
}

TEST(Geometry, BackprojectProjectRoundTrip) {
  const Camera cam = unit_camera(7, 5, 12.0, 3.0, 2.0);
  ScalarField d(7, 5);
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = 1.0 + 0.1 * static_cast<double>(k);
  const auto pts = backproject_depth(d, cam);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 7; ++j) {
      const auto p = project_point(pts(i, j), cam);
      EXPECT_NEAR(p.u, j, 1e-12);
      EXPECT_NEAR(p.v, i, 1e-12);
    }
  }
}

TEST(Grid, SignDeadZone) {
  EXPECT_EQ(sign0(1e-13), 0.0);
  EXPECT_EQ(sign0(-1e-13), 0.0);
  EXPECT_EQ(sign0(1e-11), 1.0);
  EXPECT_EQ(sign0(-2.0), -1.0);
}

TEST(Grid, RejectsEmptyShape) { EXPECT_THROW(ScalarField(0, 3), InputError); }

}  // namespace
}  // namespace surfcon
